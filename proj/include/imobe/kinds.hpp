#pragma once

#include <string_view>

namespace imobe {

// Endpoint kinds that can appear on either side of a delivery. Client is a
// user session; Store is the OBE database server endpoint; the rest are the
// five agent kinds.
enum class NodeKind { Client, UIA, AA, SA, SAA, AssA, Store };

inline constexpr NodeKind kAllNodeKinds[] = {NodeKind::Client, NodeKind::UIA, NodeKind::AA,
                                             NodeKind::SA,     NodeKind::SAA, NodeKind::AssA,
                                             NodeKind::Store};

enum class Accessibility { Public, Private };

std::string_view to_string(NodeKind kind);
NodeKind node_kind_from_string(std::string_view name);
std::string_view to_string(Accessibility a);

// AssA and the store are private; everything else is public.
Accessibility accessibility_of(NodeKind kind);

bool is_agent_kind(NodeKind kind);

}  // namespace imobe
