#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "imobe/error.hpp"
#include "imobe/kinds.hpp"
#include "imobe/protocol.hpp"

namespace imobe::runtime {

struct TraceEntry {
  protocol::MessageEnvelope envelope;
  NodeKind from;
  NodeKind to;

  protocol::TraceStep step() const { return {from, to, envelope.kind}; }
};

struct Emission {
  protocol::MessageEnvelope envelope;
  NodeKind from;
  std::optional<NodeKind> to;
};

// Serializes protocol::advance per correlation id and checks every agent
// handler against it. A handler whose emissions differ from what the
// protocol expects, or that reports a failure, fails the workflow; the
// client then receives exactly one ERROR and nothing further of that
// workflow is handled.
class WorkflowMonitor {
 public:
  explicit WorkflowMonitor(protocol::Timeouts timeouts) : timeouts_(timeouts) {}

  void on_accepted(const protocol::MessageEnvelope& e, NodeKind from, NodeKind to);
  void on_client_post(const protocol::MessageEnvelope& e);

  struct Admission {
    bool proceed = true;
    std::vector<protocol::MessageEnvelope> client_errors;
  };
  Admission before_handle(const protocol::MessageEnvelope& e);

  struct Release {
    std::vector<protocol::MessageEnvelope> deliver;
    std::vector<protocol::MessageEnvelope> client_errors;
  };
  Release after_handle(const protocol::MessageEnvelope& handled, std::vector<Emission> emitted,
                       const std::optional<std::pair<Errc, std::string>>& failure);

  std::vector<protocol::MessageEnvelope> check_deadlines(TimestampMs now);

  std::optional<protocol::WorkflowState> state(const std::string& correlation_id) const;
  std::vector<TraceEntry> trace(const std::string& correlation_id) const;
  std::vector<std::string> correlations() const;
  // How many times the workflow entered a terminal phase (0 or 1).
  int terminal_transitions(const std::string& correlation_id) const;

  const protocol::Timeouts& timeouts() const { return timeouts_; }

 private:
  struct Flow {
    protocol::WorkflowState state;
    std::vector<protocol::MessageEnvelope> expected;
    std::vector<TraceEntry> trace;
    int terminal = 0;
  };

  // Applies a transition; returns the ERROR skeletons for the client if it
  // became Failed.
  std::vector<protocol::MessageEnvelope> apply(Flow& flow, protocol::Transition t);

  protocol::Timeouts timeouts_;
  mutable std::mutex mu_;
  std::map<std::string, Flow> flows_;
};

}  // namespace imobe::runtime
