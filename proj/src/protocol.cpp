#include "imobe/protocol.hpp"

#include "imobe/error.hpp"
#include "imobe/json_util.hpp"

namespace imobe::protocol {

using nlohmann::json;

std::string_view to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::LOGIN: return "LOGIN";
    case MessageKind::ASSESS_REQUEST: return "ASSESS_REQUEST";
    case MessageKind::JOB_DELEGATE: return "JOB_DELEGATE";
    case MessageKind::DATA_RETRIEVE_REQUEST: return "DATA_RETRIEVE_REQUEST";
    case MessageKind::STORE_QUERY: return "STORE_QUERY";
    case MessageKind::STORE_RESULT: return "STORE_RESULT";
    case MessageKind::ASSESS_RESULT: return "ASSESS_RESULT";
    case MessageKind::JOB_RESULT: return "JOB_RESULT";
    case MessageKind::PRESENT: return "PRESENT";
    case MessageKind::AUDIT_EVENT: return "AUDIT_EVENT";
    case MessageKind::ERROR: return "ERROR";
  }
  return "?";
}

MessageKind message_kind_from_string(std::string_view name) {
  for (auto k : kAllMessageKinds) {
    if (to_string(k) == name) return k;
  }
  throw Error(Errc::UnknownKind, "unknown message kind '" + std::string(name) + "'");
}

json to_json(const MessageEnvelope& e) {
  return {{"v", e.v},
          {"msg_id", e.msg_id},
          {"correlation_id", e.correlation_id},
          {"ts", e.ts},
          {"from", e.from},
          {"to", e.to},
          {"kind", to_string(e.kind)},
          {"credentials", to_json(e.credentials)},
          {"payload", e.payload}};
}

MessageEnvelope envelope_from_json(const json& j) {
  if (!j.is_object()) throw Error(Errc::Malformed, "envelope must be a JSON object");
  const auto& v = jsonutil::field(j, "v", Errc::MissingField);
  if (!v.is_number_integer()) throw Error(Errc::Malformed, "v must be an integer");
  if (v.get<int>() != kWireVersion) {
    throw Error(Errc::BadVersion, "unsupported envelope version " + v.dump());
  }
  for (const char* key : {"msg_id", "correlation_id", "ts", "from", "to", "kind", "credentials",
                          "payload"}) {
    jsonutil::field(j, key, Errc::MissingField);
  }
  MessageEnvelope e;
  e.msg_id = jsonutil::get_string(j, "msg_id");
  e.correlation_id = jsonutil::get_string(j, "correlation_id");
  e.ts = jsonutil::get_int(j, "ts");
  e.from = jsonutil::get_string(j, "from");
  e.to = jsonutil::get_string(j, "to");
  e.kind = message_kind_from_string(jsonutil::get_string(j, "kind"));
  e.credentials = credentials_from_json(j.at("credentials"));
  e.payload = j.at("payload");
  return e;
}

std::string encode(const MessageEnvelope& e) { return to_json(e).dump(); }

MessageEnvelope decode(std::string_view bytes) {
  json j = json::parse(bytes, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::Malformed, "envelope is not valid JSON");
  return envelope_from_json(j);
}

json error_payload(std::string_view code, std::string_view reason,
                   std::string_view correlation_id) {
  return {{"code", code}, {"reason", reason}, {"correlation_id", correlation_id}};
}

// ---------------------------------------------------------------------------

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::Received: return "Received";
    case Phase::Delegated: return "Delegated";
    case Phase::Retrieving: return "Retrieving";
    case Phase::Queried: return "Queried";
    case Phase::Computed: return "Computed";
    case Phase::Returned: return "Returned";
    case Phase::Presented: return "Presented";
    case Phase::Failed: return "Failed";
  }
  return "?";
}

bool is_terminal(Phase phase) { return phase == Phase::Presented || phase == Phase::Failed; }

WorkflowState start_workflow(std::string correlation_id, std::string client, NodeKind delegate,
                             TimestampMs now) {
  if (delegate != NodeKind::AA && delegate != NodeKind::SA) {
    throw Error(Errc::ProtocolViolation, "workflow delegate must be AA or SA");
  }
  WorkflowState s;
  s.correlation_id = std::move(correlation_id);
  s.client = std::move(client);
  s.delegate = delegate;
  s.started_ts = s.last_ts = s.phase_ts = now;
  return s;
}

namespace {

MessageEnvelope skeleton(const WorkflowState& s, const MessageEnvelope& cause, MessageKind kind,
                         NodeKind from, NodeKind to) {
  MessageEnvelope e;
  e.correlation_id = s.correlation_id;
  e.ts = cause.ts;
  e.from = std::string(to_string(from));
  e.to = to == NodeKind::Client ? s.client : std::string(to_string(to));
  e.kind = kind;
  e.credentials = cause.credentials;
  return e;
}

Transition fail(WorkflowState s, const MessageEnvelope& cause, std::string reason,
                std::string detail) {
  s.phase = Phase::Failed;
  s.phase_ts = s.last_ts = cause.ts;
  s.failure_reason = reason;
  auto err = skeleton(s, cause, MessageKind::ERROR, NodeKind::UIA, NodeKind::Client);
  err.payload = error_payload(reason, detail, s.correlation_id);
  return {std::move(s), {std::move(err)}};
}

Transition move_to(WorkflowState s, const MessageEnvelope& cause, Phase next, MessageKind kind,
                   NodeKind from, NodeKind to) {
  if (next != s.phase) {
    s.phase = next;
    s.phase_ts = cause.ts;
    s.hop = 0;
  } else {
    ++s.hop;
  }
  s.last_ts = cause.ts;
  auto e = skeleton(s, cause, kind, from, to);
  return {std::move(s), {std::move(e)}};
}

}  // namespace

Transition advance(const WorkflowState& state, const MessageEnvelope& event) {
  if (event.correlation_id != state.correlation_id) {
    throw Error(Errc::ProtocolViolation, "event " + event.correlation_id +
                                             " applied to workflow " + state.correlation_id);
  }
  if (is_terminal(state.phase)) return {state, {}};

  using K = MessageKind;
  const NodeKind d = state.delegate;
  if (event.kind == K::ERROR) {
    std::string code = jsonutil::opt_string(event.payload, "code", "ProtocolViolation");
    std::string reason = jsonutil::opt_string(event.payload, "reason", code);
    return fail(state, event, code, reason);
  }

  switch (state.phase) {
    case Phase::Received:
      if (event.kind == K::ASSESS_REQUEST) {
        return move_to(state, event, Phase::Delegated, K::JOB_DELEGATE, NodeKind::UIA, d);
      }
      break;
    case Phase::Delegated:
      if (event.kind == K::JOB_DELEGATE) {
        const NodeKind target = d == NodeKind::SA ? NodeKind::UIA : NodeKind::AssA;
        return move_to(state, event, Phase::Retrieving, K::DATA_RETRIEVE_REQUEST, d, target);
      }
      break;
    case Phase::Retrieving:
      if (event.kind == K::DATA_RETRIEVE_REQUEST) {
        if (d == NodeKind::SA && state.hop == 0) {
          return move_to(state, event, Phase::Retrieving, K::DATA_RETRIEVE_REQUEST, NodeKind::UIA,
                         NodeKind::AssA);
        }
        return move_to(state, event, Phase::Queried, K::STORE_QUERY, NodeKind::AssA,
                       NodeKind::Store);
      }
      break;
    case Phase::Queried:
      if (event.kind == K::STORE_QUERY && state.hop == 0) {
        return move_to(state, event, Phase::Queried, K::STORE_RESULT, NodeKind::Store,
                       NodeKind::AssA);
      }
      if (event.kind == K::STORE_RESULT && state.hop == 1) {
        return move_to(state, event, Phase::Computed, K::ASSESS_RESULT, NodeKind::AssA, d);
      }
      break;
    case Phase::Computed:
      if (event.kind == K::ASSESS_RESULT) {
        return move_to(state, event, Phase::Returned, K::JOB_RESULT, d, NodeKind::UIA);
      }
      break;
    case Phase::Returned:
      if (event.kind == K::JOB_RESULT) {
        return move_to(state, event, Phase::Presented, K::PRESENT, NodeKind::UIA,
                       NodeKind::Client);
      }
      break;
    case Phase::Presented:
    case Phase::Failed:
      break;
  }
  return fail(state, event, "ProtocolViolation",
              std::string(to_string(event.kind)) + " not expected in phase " +
                  std::string(to_string(state.phase)));
}

Transition check_deadline(const WorkflowState& state, TimestampMs now, const Timeouts& t) {
  if (is_terminal(state.phase)) return {state, {}};
  const bool phase_over = now - state.phase_ts > t.phase_ms;
  const bool budget_over = now - state.started_ts > t.workflow_ms;
  if (!phase_over && !budget_over) return {state, {}};
  MessageEnvelope tick;
  tick.correlation_id = state.correlation_id;
  tick.ts = now;
  return fail(state, tick, "Timeout",
              phase_over ? "phase " + std::string(to_string(state.phase)) + " exceeded " +
                               std::to_string(t.phase_ms) + " ms"
                         : "workflow exceeded " + std::to_string(t.workflow_ms) + " ms");
}

std::string format_step(const TraceStep& step) {
  return std::string(to_string(step.from)) + " -> " + std::string(to_string(step.to)) + " " +
         std::string(to_string(step.kind));
}

std::vector<TraceStep> canonical_trace(NodeKind delegate) {
  using K = MessageKind;
  using N = NodeKind;
  std::vector<TraceStep> t{{N::Client, N::UIA, K::ASSESS_REQUEST},
                           {N::UIA, delegate, K::JOB_DELEGATE}};
  if (delegate == N::SA) {
    t.push_back({N::SA, N::UIA, K::DATA_RETRIEVE_REQUEST});
    t.push_back({N::UIA, N::AssA, K::DATA_RETRIEVE_REQUEST});
  } else {
    t.push_back({N::AA, N::AssA, K::DATA_RETRIEVE_REQUEST});
  }
  t.insert(t.end(), {{N::AssA, N::Store, K::STORE_QUERY},
                     {N::Store, N::AssA, K::STORE_RESULT},
                     {N::AssA, delegate, K::ASSESS_RESULT},
                     {delegate, N::UIA, K::JOB_RESULT},
                     {N::UIA, N::Client, K::PRESENT}});
  return t;
}

}  // namespace imobe::protocol
