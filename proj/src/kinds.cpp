#include "imobe/kinds.hpp"

#include <string>

#include "imobe/error.hpp"

namespace imobe {

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::Client: return "client";
    case NodeKind::UIA: return "UIA";
    case NodeKind::AA: return "AA";
    case NodeKind::SA: return "SA";
    case NodeKind::SAA: return "SAA";
    case NodeKind::AssA: return "AssA";
    case NodeKind::Store: return "store";
  }
  return "?";
}

NodeKind node_kind_from_string(std::string_view name) {
  for (auto k : kAllNodeKinds) {
    if (to_string(k) == name) return k;
  }
  throw Error(Errc::Malformed, "unknown node kind '" + std::string(name) + "'");
}

std::string_view to_string(Accessibility a) {
  return a == Accessibility::Public ? "Public" : "Private";
}

Accessibility accessibility_of(NodeKind kind) {
  return kind == NodeKind::AssA || kind == NodeKind::Store ? Accessibility::Private
                                                           : Accessibility::Public;
}

bool is_agent_kind(NodeKind kind) {
  return kind != NodeKind::Client && kind != NodeKind::Store;
}

}  // namespace imobe
