#pragma once

// Wire envelope, message kinds and the assessment workflow state machine.
//
// One assessment request is one workflow, identified by its correlation id.
// The happy path for an academician walks the canonical eight-step trace
//
//   client->UIA ASSESS_REQUEST, UIA->AA JOB_DELEGATE,
//   AA->AssA DATA_RETRIEVE_REQUEST, AssA->store STORE_QUERY,
//   store->AssA STORE_RESULT, AssA->AA ASSESS_RESULT,
//   AA->UIA JOB_RESULT, UIA->client PRESENT
//
// Student requests are served by the SA, whose retrieval request is relayed
// through the UIA (SA->UIA, UIA->AssA), giving nine steps.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "imobe/auth.hpp"
#include "imobe/clock.hpp"
#include "imobe/kinds.hpp"
#include "json.hpp"

namespace imobe::protocol {

inline constexpr int kWireVersion = 1;

enum class MessageKind {
  LOGIN,
  ASSESS_REQUEST,
  JOB_DELEGATE,
  DATA_RETRIEVE_REQUEST,
  STORE_QUERY,
  STORE_RESULT,
  ASSESS_RESULT,
  JOB_RESULT,
  PRESENT,
  AUDIT_EVENT,
  ERROR,
};

inline constexpr MessageKind kAllMessageKinds[] = {
    MessageKind::LOGIN,        MessageKind::ASSESS_REQUEST, MessageKind::JOB_DELEGATE,
    MessageKind::DATA_RETRIEVE_REQUEST, MessageKind::STORE_QUERY, MessageKind::STORE_RESULT,
    MessageKind::ASSESS_RESULT, MessageKind::JOB_RESULT,   MessageKind::PRESENT,
    MessageKind::AUDIT_EVENT,  MessageKind::ERROR};

std::string_view to_string(MessageKind kind);
// Throws Error(UnknownKind).
MessageKind message_kind_from_string(std::string_view name);

struct MessageEnvelope {
  int v = kWireVersion;
  std::string msg_id;
  std::string correlation_id;
  TimestampMs ts = 0;
  std::string from;
  std::string to;
  MessageKind kind = MessageKind::ERROR;
  Credentials credentials;
  nlohmann::json payload = nlohmann::json::object();

  bool operator==(const MessageEnvelope&) const = default;
};

nlohmann::json to_json(const MessageEnvelope& e);
// Throws Error(BadVersion | MissingField | UnknownKind | Malformed).
MessageEnvelope envelope_from_json(const nlohmann::json& j);

// Canonical (key-ordered, compact) JSON bytes.
std::string encode(const MessageEnvelope& e);
MessageEnvelope decode(std::string_view bytes);

// ERROR payloads: {code, reason, correlation_id}.
nlohmann::json error_payload(std::string_view code, std::string_view reason,
                             std::string_view correlation_id);

// ---------------------------------------------------------------------------
// Workflow state machine

enum class Phase { Received, Delegated, Retrieving, Queried, Computed, Returned, Presented, Failed };

std::string_view to_string(Phase phase);
bool is_terminal(Phase phase);

struct WorkflowState {
  std::string correlation_id;
  Phase phase = Phase::Received;
  // AA for academician requests, SA for student requests.
  NodeKind delegate = NodeKind::AA;
  // Session id of the originating client.
  std::string client;
  TimestampMs started_ts = 0;
  TimestampMs last_ts = 0;
  TimestampMs phase_ts = 0;
  // Intermediate hops inside one phase (relay, store handling the query).
  int hop = 0;
  std::optional<std::string> failure_reason;

  bool operator==(const WorkflowState&) const = default;
};

struct Timeouts {
  TimestampMs phase_ms = 5000;
  TimestampMs workflow_ms = 15000;
};

struct Transition {
  WorkflowState state;
  // Envelope skeletons the protocol expects next. `from`/`to` hold node
  // kind names, except a client target which holds the session id.
  std::vector<MessageEnvelope> emit;
};

WorkflowState start_workflow(std::string correlation_id, std::string client, NodeKind delegate,
                             TimestampMs now);

// Pure transition function. Throws Error(ProtocolViolation) if the event
// belongs to another correlation.
Transition advance(const WorkflowState& state, const MessageEnvelope& event);

// Fails a non-terminal workflow whose phase or overall budget has elapsed.
Transition check_deadline(const WorkflowState& state, TimestampMs now, const Timeouts& timeouts);

struct TraceStep {
  NodeKind from;
  NodeKind to;
  MessageKind kind;

  bool operator==(const TraceStep&) const = default;
};

std::string format_step(const TraceStep& step);

// The fixed envelope sequence of a successful request served by `delegate`.
std::vector<TraceStep> canonical_trace(NodeKind delegate = NodeKind::AA);

}  // namespace imobe::protocol
