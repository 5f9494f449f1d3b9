#pragma once

#include <deque>
#include <string>
#include <string_view>

#include "imobe/kinds.hpp"
#include "imobe/protocol.hpp"

namespace imobe::runtime {

enum class Lifecycle { Active, Sleeping, Terminated };

std::string_view to_string(Lifecycle lifecycle);

struct AgentDescriptor {
  std::string agent_id;
  NodeKind kind = NodeKind::AA;
  Accessibility accessibility = Accessibility::Public;
  std::string home_container;

  bool operator==(const AgentDescriptor&) const = default;
};

// Descriptor with the accessibility the kind requires.
AgentDescriptor make_descriptor(std::string agent_id, NodeKind kind, std::string home_container);

struct AgentState {
  AgentDescriptor descriptor;
  Lifecycle lifecycle = Lifecycle::Active;
  std::deque<protocol::MessageEnvelope> mailbox;
  // Canonical bytes owned by the agent's behavior.
  std::string internal;

  bool operator==(const AgentState&) const = default;
};

}  // namespace imobe::runtime
