#pragma once

// Agent runtime: containers, lifecycle, credential-checked delivery into
// per-agent FIFO mailboxes, and checkpoint/resume of agent state.
//
// Each agent handles one envelope at a time, in delivery order. Two
// schedulers are available:
//   - Deterministic: nothing runs until step()/run_until_idle() is called;
//     agents are visited round-robin in agent-id order.
//   - Concurrent: a worker pool drains mailboxes; an agent is owned by at
//     most one worker at a time.
//
// Every accepted delivery has authenticated credentials and a
// (sender kind, target kind, message kind) triple that is in the route
// table. Rejections are audited and answered with an ERROR envelope to the
// sender.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "imobe/audit.hpp"
#include "imobe/auth.hpp"
#include "imobe/checkpoint.hpp"
#include "imobe/clock.hpp"
#include "imobe/error.hpp"
#include "imobe/kinds.hpp"
#include "imobe/protocol.hpp"
#include "imobe/workflow.hpp"

namespace imobe::runtime {

using protocol::MessageEnvelope;
using protocol::MessageKind;

enum class ContainerKind { Main, Client };

struct Container {
  std::string container_id;
  ContainerKind kind = ContainerKind::Client;
  std::set<std::string> hosted;
};

struct AgentHandle {
  std::string agent_id;
  std::string container_id;

  bool operator==(const AgentHandle&) const = default;
};

struct Route {
  NodeKind from;
  NodeKind to;
  MessageKind kind;
};

// The complete route table. Anything not listed is forbidden.
const std::vector<Route>& route_table();
bool route_allowed(NodeKind from, NodeKind to, MessageKind kind);

class AgentContext;

// Reactive agent logic. Implementations keep no state of their own: all
// per-agent state lives in the canonical bytes exposed by
// AgentContext::internal().
class Behavior {
 public:
  virtual ~Behavior() = default;
  // Internal state of a freshly dispatched agent owned by `owner`.
  virtual std::string initial_state(const Credentials& owner) const;
  virtual void handle(AgentContext& ctx, const MessageEnvelope& envelope) const = 0;
};

using BehaviorFactory = std::function<std::shared_ptr<const Behavior>(NodeKind)>;

class AgentContext {
 public:
  const AgentDescriptor& self() const { return self_; }
  const PrivilegeSet& privileges() const { return privileges_; }
  TimestampMs now() const { return now_; }
  // Kind of the endpoint that sent the envelope being handled.
  std::optional<NodeKind> sender_kind() const { return sender_kind_; }

  std::string& internal() { return internal_; }
  // internal() parsed as JSON; empty bytes read as {}.
  nlohmann::json state() const;
  void set_state(const nlohmann::json& state);

  // Emits an envelope in the correlation and with the credentials of the
  // envelope being handled.
  void send(std::string to, MessageKind kind, nlohmann::json payload);
  // Fails the current workflow; nothing emitted by this handler is sent.
  void fail(Errc code, std::string detail);

  // Registry lookup of an Active agent of `kind`, preferring the main
  // container.
  std::optional<std::string> lookup(NodeKind kind) const;

  const std::vector<MessageEnvelope>& outbox() const { return outbox_; }
  const std::optional<std::pair<Errc, std::string>>& failure() const { return failure_; }

 private:
  friend class Runtime;
  AgentContext(AgentDescriptor self, PrivilegeSet privileges, TimestampMs now,
               std::string internal, const MessageEnvelope& current,
               std::optional<NodeKind> sender_kind,
               std::function<std::optional<std::string>(NodeKind)> lookup)
      : self_(std::move(self)),
        privileges_(std::move(privileges)),
        now_(now),
        sender_kind_(sender_kind),
        internal_(std::move(internal)),
        current_(current),
        lookup_(std::move(lookup)) {}

  AgentDescriptor self_;
  PrivilegeSet privileges_;
  TimestampMs now_;
  std::optional<NodeKind> sender_kind_;
  std::string internal_;
  const MessageEnvelope& current_;
  std::function<std::optional<std::string>(NodeKind)> lookup_;
  std::vector<MessageEnvelope> outbox_;
  std::optional<std::pair<Errc, std::string>> failure_;
};

enum class Mode { Deterministic, Concurrent };

struct DeliveryResult {
  bool accepted = false;
  std::optional<Errc> reason;
  std::string detail;
};

struct RuntimeOptions {
  Mode mode = Mode::Deterministic;
  std::size_t workers = 4;
  protocol::Timeouts timeouts;
  // Concurrent mode only: how often workflow deadlines are checked.
  std::int64_t tick_ms = 20;
};

class Runtime {
 public:
  Runtime(Authenticator& auth, const Clock& clock, BehaviorFactory behaviors,
          RuntimeOptions options = {});
  ~Runtime();

  Runtime(const Runtime&) = delete;
  Runtime& operator=(const Runtime&) = delete;

  Mode mode() const { return options_.mode; }
  const std::string& main_container() const { return main_container_; }

  // Client containers only; the single Main container exists from
  // construction.
  std::string create_client_container();
  // Terminates every agent hosted in a Client container and removes it.
  void remove_container(const std::string& container_id);
  bool has_container(const std::string& container_id) const;

  // Throws Error(Unauthorized | DuplicateAgentId | NoSuchContainer |
  // ValidationFailure) and the authentication errors.
  AgentHandle dispatch(const AgentDescriptor& descriptor, const std::string& container_id,
                       const Credentials& credentials);

  DeliveryResult deliver(MessageEnvelope envelope);

  // Throws Error(AgentUnknown | AgentTerminated). Leaves the agent Sleeping.
  CheckpointBlob checkpoint(const std::string& agent_id);
  // Throws Error(DigestMismatch | DuplicateAgentId | NoSuchContainer).
  AgentHandle resume(const CheckpointBlob& blob, const std::string& container_id);

  // Throws Error(IllegalTransition | AgentUnknown).
  Lifecycle terminate(const std::string& agent_id);
  Lifecycle sleep(const std::string& agent_id);
  Lifecycle wake(const std::string& agent_id);

  // Client sessions are endpoints of kind Client hosted in a Client
  // container.
  void open_client(const std::string& session_id, const std::string& principal,
                   const std::string& container_id);
  void close_client(const std::string& session_id);
  std::vector<MessageEnvelope> client_inbox(const std::string& session_id) const;
  // Waits for an envelope in `correlation_id` to reach the session. In
  // deterministic mode the scheduler is driven until idle first.
  std::optional<MessageEnvelope> await_client(const std::string& session_id,
                                              const std::string& correlation_id,
                                              std::chrono::milliseconds timeout);

  // Deterministic scheduling.
  bool step();
  std::size_t run_until_idle(std::size_t max_steps = 10'000'000);
  // Blocks until no envelope is queued or in flight (either mode).
  void drain();
  // Checks workflow deadlines against the clock.
  void tick();

  std::string next_msg_id();
  std::string next_correlation_id();

  std::optional<AgentState> agent_state(const std::string& agent_id) const;
  std::optional<std::string> container_of(const std::string& agent_id) const;
  std::optional<NodeKind> kind_of(const std::string& endpoint_id) const;
  std::optional<std::string> find_agent(NodeKind kind) const;
  std::vector<std::string> agent_ids() const;

  WorkflowMonitor& workflows() { return monitor_; }
  const WorkflowMonitor& workflows() const { return monitor_; }

  void set_audit_sink(std::function<void(audit::AuditEvent)> sink);
  // Test hooks. The observer sees every accepted delivery; the interceptor
  // may rewrite envelopes emitted by agents before they are delivered.
  void set_delivery_observer(std::function<void(const MessageEnvelope&)> observer);
  void set_outbound_interceptor(std::function<void(MessageEnvelope&)> interceptor);

 private:
  struct Slot {
    AgentState state;
    std::string container;
    std::shared_ptr<const Behavior> behavior;
    bool scheduled = false;
    bool busy = false;
  };
  struct ClientEndpoint {
    std::string principal;
    std::string container;
    std::deque<MessageEnvelope> inbox;
  };

  std::optional<NodeKind> kind_of_locked(const std::string& id) const;
  std::optional<std::string> find_agent_locked(NodeKind kind) const;
  void schedule_locked(const std::string& agent_id, Slot& slot);
  bool process_one(const std::string& agent_id);
  void reject(const MessageEnvelope& envelope, std::optional<NodeKind> sender, Errc code,
              const std::string& detail);
  void post_to_client(MessageEnvelope envelope);
  void emit_audit(audit::AuditEvent event);
  void worker_loop();
  void ticker_loop();

  Authenticator& auth_;
  const Clock& clock_;
  BehaviorFactory behaviors_;
  RuntimeOptions options_;
  WorkflowMonitor monitor_;
  std::string main_container_ = "main";

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::string, Container> containers_;
  std::map<std::string, Slot> agents_;
  std::map<std::string, ClientEndpoint> clients_;
  std::deque<std::string> ready_;
  std::size_t in_flight_ = 0;
  std::string cursor_;
  bool stopping_ = false;

  std::atomic<std::uint64_t> msg_seq_{0};
  std::atomic<std::uint64_t> corr_seq_{0};
  std::atomic<std::uint64_t> container_seq_{0};

  std::mutex hooks_mu_;
  std::function<void(audit::AuditEvent)> audit_sink_;
  std::function<void(const MessageEnvelope&)> observer_;
  std::function<void(MessageEnvelope&)> interceptor_;

  std::vector<std::thread> workers_;
  std::thread ticker_;
};

}  // namespace imobe::runtime
