#include "imobe/workflow.hpp"

#include "imobe/json_util.hpp"

namespace imobe::runtime {

using protocol::MessageEnvelope;
using protocol::MessageKind;
using protocol::Phase;

void WorkflowMonitor::on_accepted(const MessageEnvelope& e, NodeKind from, NodeKind to) {
  if (e.kind == MessageKind::AUDIT_EVENT || e.kind == MessageKind::LOGIN) return;
  std::lock_guard lock(mu_);
  auto it = flows_.find(e.correlation_id);
  if (it == flows_.end()) {
    if (e.kind != MessageKind::ASSESS_REQUEST || from != NodeKind::Client) return;
    const bool student = jsonutil::opt_string(e.payload, "role") == "Student";
    Flow flow;
    flow.state = protocol::start_workflow(e.correlation_id, e.from,
                                          student ? NodeKind::SA : NodeKind::AA, e.ts);
    it = flows_.emplace(e.correlation_id, std::move(flow)).first;
  }
  it->second.trace.push_back({e, from, to});
}

void WorkflowMonitor::on_client_post(const MessageEnvelope& e) {
  std::lock_guard lock(mu_);
  if (auto it = flows_.find(e.correlation_id); it != flows_.end()) {
    it->second.trace.push_back({e, NodeKind::UIA, NodeKind::Client});
  }
}

std::vector<MessageEnvelope> WorkflowMonitor::apply(Flow& flow, protocol::Transition t) {
  const bool was_terminal = protocol::is_terminal(flow.state.phase);
  flow.state = std::move(t.state);
  if (!was_terminal && protocol::is_terminal(flow.state.phase)) ++flow.terminal;
  if (flow.state.phase == Phase::Failed) {
    flow.expected.clear();
    return std::move(t.emit);
  }
  flow.expected = std::move(t.emit);
  return {};
}

WorkflowMonitor::Admission WorkflowMonitor::before_handle(const MessageEnvelope& e) {
  std::lock_guard lock(mu_);
  auto it = flows_.find(e.correlation_id);
  if (it == flows_.end()) return {true, {}};
  Flow& flow = it->second;
  if (protocol::is_terminal(flow.state.phase)) return {false, {}};
  auto errors = apply(flow, protocol::advance(flow.state, e));
  if (flow.state.phase == Phase::Failed) return {false, std::move(errors)};
  return {true, {}};
}

namespace {

bool matches(const MessageEnvelope& expected, const Emission& actual) {
  if (expected.kind != actual.envelope.kind) return false;
  if (expected.from != to_string(actual.from)) return false;
  if (actual.to == NodeKind::Client) return expected.to == actual.envelope.to;
  return actual.to && expected.to == to_string(*actual.to);
}

}  // namespace

WorkflowMonitor::Release WorkflowMonitor::after_handle(
    const MessageEnvelope& handled, std::vector<Emission> emitted,
    const std::optional<std::pair<Errc, std::string>>& failure) {
  Release out;
  std::lock_guard lock(mu_);
  auto it = flows_.find(handled.correlation_id);
  if (it == flows_.end()) {
    if (!failure) {
      for (auto& e : emitted) out.deliver.push_back(std::move(e.envelope));
    }
    return out;
  }
  Flow& flow = it->second;

  std::vector<Emission> own;
  for (auto& e : emitted) {
    if (e.envelope.correlation_id == handled.correlation_id &&
        e.envelope.kind != MessageKind::AUDIT_EVENT) {
      own.push_back(std::move(e));
    } else {
      out.deliver.push_back(std::move(e.envelope));
    }
  }
  // Presented is entered on the handled JOB_RESULT itself; its PRESENT still goes out.
  if (flow.state.phase == protocol::Phase::Failed) return out;

  std::optional<std::pair<std::string, std::string>> reason;
  if (failure) {
    reason.emplace(std::string(to_string(failure->first)), failure->second);
  } else if (own.size() != flow.expected.size()) {
    reason.emplace("ProtocolViolation", "handler emitted " + std::to_string(own.size()) +
                                            " envelopes, protocol expects " +
                                            std::to_string(flow.expected.size()));
  } else {
    for (std::size_t i = 0; i < own.size(); ++i) {
      if (!matches(flow.expected[i], own[i])) {
        reason.emplace("ProtocolViolation",
                       "unexpected " + std::string(to_string(own[i].envelope.kind)) + " from " +
                           std::string(to_string(own[i].from)));
        break;
      }
    }
  }

  if (reason) {
    MessageEnvelope err;
    err.correlation_id = handled.correlation_id;
    err.kind = MessageKind::ERROR;
    err.ts = handled.ts;
    err.credentials = handled.credentials;
    err.payload = protocol::error_payload(reason->first, reason->second, handled.correlation_id);
    out.client_errors = apply(flow, protocol::advance(flow.state, err));
    return out;
  }
  flow.expected.clear();
  for (auto& e : own) out.deliver.push_back(std::move(e.envelope));
  return out;
}

std::vector<MessageEnvelope> WorkflowMonitor::check_deadlines(TimestampMs now) {
  std::vector<MessageEnvelope> out;
  std::lock_guard lock(mu_);
  for (auto& [id, flow] : flows_) {
    if (protocol::is_terminal(flow.state.phase)) continue;
    auto errors = apply(flow, protocol::check_deadline(flow.state, now, timeouts_));
    out.insert(out.end(), errors.begin(), errors.end());
  }
  return out;
}

std::optional<protocol::WorkflowState> WorkflowMonitor::state(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = flows_.find(id);
  if (it == flows_.end()) return std::nullopt;
  return it->second.state;
}

std::vector<TraceEntry> WorkflowMonitor::trace(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = flows_.find(id);
  if (it == flows_.end()) return {};
  return it->second.trace;
}

std::vector<std::string> WorkflowMonitor::correlations() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, _] : flows_) out.push_back(id);
  return out;
}

int WorkflowMonitor::terminal_transitions(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = flows_.find(id);
  return it == flows_.end() ? 0 : it->second.terminal;
}

}  // namespace imobe::runtime
