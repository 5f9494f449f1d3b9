#include "imobe/runtime.hpp"

#include <algorithm>

namespace imobe::runtime {

using nlohmann::json;

namespace {

using N = NodeKind;
using K = MessageKind;

}  // namespace

const std::vector<Route>& route_table() {
  static const std::vector<Route> table{
      {N::Client, N::UIA, K::LOGIN},
      {N::Client, N::UIA, K::ASSESS_REQUEST},
      {N::UIA, N::AA, K::JOB_DELEGATE},
      {N::UIA, N::SA, K::JOB_DELEGATE},
      {N::UIA, N::SAA, K::AUDIT_EVENT},
      // Student jobs reach the assessment agent through the interface agent.
      {N::UIA, N::AssA, K::DATA_RETRIEVE_REQUEST},
      {N::UIA, N::Client, K::PRESENT},
      {N::UIA, N::Client, K::ERROR},
      {N::AA, N::AssA, K::DATA_RETRIEVE_REQUEST},
      {N::AA, N::UIA, K::JOB_RESULT},
      {N::SA, N::UIA, K::DATA_RETRIEVE_REQUEST},
      {N::SA, N::UIA, K::JOB_RESULT},
      {N::AssA, N::Store, K::STORE_QUERY},
      {N::AssA, N::AA, K::ASSESS_RESULT},
      {N::AssA, N::SA, K::ASSESS_RESULT},
      {N::Store, N::AssA, K::STORE_RESULT},
      {N::Store, N::SAA, K::AUDIT_EVENT},
      {N::Store, N::SAA, K::STORE_RESULT},
      {N::SAA, N::Store, K::STORE_QUERY},
  };
  return table;
}

bool route_allowed(NodeKind from, NodeKind to, MessageKind kind) {
  const auto& t = route_table();
  return std::any_of(t.begin(), t.end(), [&](const Route& r) {
    return r.from == from && r.to == to && r.kind == kind;
  });
}

std::string Behavior::initial_state(const Credentials&) const { return "{}"; }

json AgentContext::state() const {
  if (internal_.empty()) return json::object();
  json j = json::parse(internal_, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::Malformed, "agent state is not JSON");
  return j;
}

void AgentContext::set_state(const json& state) { internal_ = state.dump(); }

void AgentContext::send(std::string to, MessageKind kind, json payload) {
  MessageEnvelope e;
  e.correlation_id = current_.correlation_id;
  e.ts = now_;
  e.from = self_.agent_id;
  e.to = std::move(to);
  e.kind = kind;
  e.credentials = current_.credentials;
  e.payload = std::move(payload);
  outbox_.push_back(std::move(e));
}

void AgentContext::fail(Errc code, std::string detail) {
  if (!failure_) failure_.emplace(code, std::move(detail));
}

std::optional<std::string> AgentContext::lookup(NodeKind kind) const { return lookup_(kind); }

// ---------------------------------------------------------------------------

Runtime::Runtime(Authenticator& auth, const Clock& clock, BehaviorFactory behaviors,
                 RuntimeOptions options)
    : auth_(auth),
      clock_(clock),
      behaviors_(std::move(behaviors)),
      options_(options),
      monitor_(options.timeouts) {
  containers_[main_container_] = Container{main_container_, ContainerKind::Main, {}};
  if (options_.mode == Mode::Concurrent) {
    const std::size_t n = std::max<std::size_t>(1, options_.workers);
    for (std::size_t i = 0; i < n; ++i) workers_.emplace_back([this] { worker_loop(); });
    ticker_ = std::thread([this] { ticker_loop(); });
  }
}

Runtime::~Runtime() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  for (auto& w : workers_) w.join();
  if (ticker_.joinable()) ticker_.join();
}

std::string Runtime::create_client_container() {
  std::lock_guard lock(mu_);
  std::string id = "client-" + std::to_string(++container_seq_);
  containers_[id] = Container{id, ContainerKind::Client, {}};
  return id;
}

void Runtime::remove_container(const std::string& container_id) {
  std::lock_guard lock(mu_);
  auto it = containers_.find(container_id);
  if (it == containers_.end()) throw Error(Errc::NoSuchContainer, container_id);
  if (it->second.kind == ContainerKind::Main) {
    throw Error(Errc::IllegalTransition, "the main container cannot be removed");
  }
  for (const auto& id : it->second.hosted) {
    auto& slot = agents_.at(id);
    slot.state.lifecycle = Lifecycle::Terminated;
    slot.state.mailbox.clear();
  }
  for (auto c = clients_.begin(); c != clients_.end();) {
    c = c->second.container == container_id ? clients_.erase(c) : std::next(c);
  }
  containers_.erase(it);
  cv_.notify_all();
}

bool Runtime::has_container(const std::string& container_id) const {
  std::lock_guard lock(mu_);
  return containers_.count(container_id) != 0;
}

namespace {

bool may_dispatch(const PrivilegeSet& p, NodeKind kind) {
  if (p.has(Role::System)) return true;
  switch (kind) {
    case NodeKind::AA: return p.has(Role::Academician);
    case NodeKind::SA: return p.has(Role::Student);
    case NodeKind::SAA: return p.has(Role::Administrator);
    default: return false;
  }
}

audit::AuditAction action_for(Errc code) {
  switch (code) {
    case Errc::InvalidCredentials:
    case Errc::ExpiredCredentials:
    case Errc::UnknownPrincipal:
    case Errc::AccountDisabled: return audit::AuditAction::AuthFailure;
    default: return audit::AuditAction::RouteRejection;
  }
}

}  // namespace

AgentHandle Runtime::dispatch(const AgentDescriptor& d, const std::string& container_id,
                              const Credentials& credentials) {
  PrivilegeSet privileges;
  try {
    privileges = auth_.authenticate(credentials);
  } catch (const Error& e) {
    emit_audit({0, clock_.now_ms(), credentials.principal, audit::AuditAction::AuthFailure,
                d.agent_id, {{"code", to_string(e.code())}, {"op", "dispatch"}}});
    throw;
  }
  if (d.kind == NodeKind::Client || d.agent_id.empty()) {
    throw Error(Errc::ValidationFailure, "not an agent descriptor");
  }
  if (d.accessibility != accessibility_of(d.kind)) {
    throw Error(Errc::ValidationFailure, std::string(to_string(d.kind)) + " agents are " +
                                             std::string(to_string(accessibility_of(d.kind))));
  }
  if (!may_dispatch(privileges, d.kind)) {
    emit_audit({0, clock_.now_ms(), credentials.principal, audit::AuditAction::RouteRejection,
                d.agent_id, {{"code", "Unauthorized"}, {"op", "dispatch"}}});
    throw Error(Errc::Unauthorized, credentials.principal + " may not dispatch " +
                                        std::string(to_string(d.kind)));
  }
  auto behavior = behaviors_ ? behaviors_(d.kind) : nullptr;
  if (!behavior) throw Error(Errc::ValidationFailure, "no behavior for " + std::string(to_string(d.kind)));

  std::lock_guard lock(mu_);
  auto c = containers_.find(container_id);
  if (c == containers_.end()) throw Error(Errc::NoSuchContainer, container_id);
  if (agents_.count(d.agent_id) || clients_.count(d.agent_id)) {
    throw Error(Errc::DuplicateAgentId, d.agent_id);
  }
  Slot slot;
  slot.state.descriptor = d;
  slot.state.lifecycle = Lifecycle::Active;
  slot.state.internal = behavior->initial_state(credentials);
  slot.container = container_id;
  slot.behavior = std::move(behavior);
  agents_.emplace(d.agent_id, std::move(slot));
  c->second.hosted.insert(d.agent_id);
  return {d.agent_id, container_id};
}

std::optional<NodeKind> Runtime::kind_of_locked(const std::string& id) const {
  if (auto a = agents_.find(id); a != agents_.end()) return a->second.state.descriptor.kind;
  if (clients_.count(id)) return NodeKind::Client;
  return std::nullopt;
}

std::optional<std::string> Runtime::find_agent_locked(NodeKind kind) const {
  std::optional<std::string> fallback;
  for (const auto& [id, slot] : agents_) {
    if (slot.state.descriptor.kind != kind || slot.state.lifecycle != Lifecycle::Active) continue;
    if (slot.container == main_container_) return id;
    if (!fallback) fallback = id;
  }
  return fallback;
}

void Runtime::schedule_locked(const std::string& agent_id, Slot& slot) {
  if (options_.mode != Mode::Concurrent || slot.scheduled) return;
  if (slot.state.lifecycle != Lifecycle::Active || slot.state.mailbox.empty()) return;
  slot.scheduled = true;
  ++in_flight_;
  ready_.push_back(agent_id);
  cv_.notify_all();
}

DeliveryResult Runtime::deliver(MessageEnvelope envelope) {
  if (envelope.msg_id.empty()) envelope.msg_id = next_msg_id();
  if (envelope.ts == 0) envelope.ts = clock_.now_ms();

  std::optional<NodeKind> sender;
  {
    std::lock_guard lock(mu_);
    sender = kind_of_locked(envelope.from);
  }
  try {
    auth_.authenticate(envelope.credentials);
  } catch (const Error& e) {
    reject(envelope, sender, e.code(), e.detail());
    return {false, e.code(), e.detail()};
  }

  bool accepted = false;
  Errc code = Errc::RouteForbidden;
  std::string detail;
  NodeKind target_kind = NodeKind::Client;
  {
    std::unique_lock lock(mu_);
    sender = kind_of_locked(envelope.from);
    auto target = kind_of_locked(envelope.to);
    if (!sender) {
      detail = "unknown sender " + envelope.from;
    } else if (*sender == NodeKind::Client &&
               clients_.at(envelope.from).principal != envelope.credentials.principal) {
      detail = "credentials do not belong to session " + envelope.from;
    } else if (!target) {
      code = Errc::AgentUnknown;
      detail = "no endpoint " + envelope.to;
    } else if (!route_allowed(*sender, *target, envelope.kind)) {
      detail = std::string(to_string(*sender)) + " -> " + std::string(to_string(*target)) + " " +
               std::string(to_string(envelope.kind)) + " is not a permitted route";
    } else if (*target == NodeKind::Client) {
      target_kind = *target;
      clients_.at(envelope.to).inbox.push_back(envelope);
      accepted = true;
    } else {
      auto& slot = agents_.at(envelope.to);
      if (slot.state.lifecycle == Lifecycle::Terminated) {
        code = Errc::AgentTerminated;
        detail = envelope.to + " is terminated";
      } else {
        target_kind = *target;
        slot.state.mailbox.push_back(envelope);
        accepted = true;
      }
    }
    if (accepted) {
      // Recorded before the target can possibly handle it.
      monitor_.on_accepted(envelope, *sender, target_kind);
      if (target_kind != NodeKind::Client) schedule_locked(envelope.to, agents_.at(envelope.to));
      cv_.notify_all();
    }
  }
  if (!accepted) {
    reject(envelope, sender, code, detail);
    return {false, code, detail};
  }
  std::function<void(const MessageEnvelope&)> observer;
  {
    std::lock_guard lock(hooks_mu_);
    observer = observer_;
  }
  if (observer) observer(envelope);
  return {true, std::nullopt, {}};
}

void Runtime::reject(const MessageEnvelope& envelope, std::optional<NodeKind> sender, Errc code,
                     const std::string& detail) {
  if (envelope.kind != MessageKind::AUDIT_EVENT) {
    emit_audit({0, clock_.now_ms(),
                envelope.credentials.principal.empty() ? "unknown" : envelope.credentials.principal,
                action_for(code), envelope.to,
                {{"code", to_string(code)},
                 {"reason", detail},
                 {"kind", to_string(envelope.kind)},
                 {"from", envelope.from},
                 {"msg_id", envelope.msg_id}}});
  }
  if (!sender) return;

  MessageEnvelope notice;
  notice.msg_id = next_msg_id();
  notice.correlation_id = envelope.correlation_id;
  notice.ts = clock_.now_ms();
  notice.from = "runtime";
  notice.to = envelope.from;
  notice.kind = MessageKind::ERROR;
  notice.credentials = envelope.credentials;
  notice.payload = protocol::error_payload(to_string(code), detail, envelope.correlation_id);

  std::lock_guard lock(mu_);
  if (auto c = clients_.find(envelope.from); c != clients_.end()) {
    c->second.inbox.push_back(std::move(notice));
  } else if (auto a = agents_.find(envelope.from); a != agents_.end()) {
    if (a->second.state.lifecycle == Lifecycle::Terminated) return;
    a->second.state.mailbox.push_back(std::move(notice));
    schedule_locked(envelope.from, a->second);
  }
  cv_.notify_all();
}

void Runtime::post_to_client(MessageEnvelope envelope) {
  if (envelope.msg_id.empty()) envelope.msg_id = next_msg_id();
  if (envelope.ts == 0) envelope.ts = clock_.now_ms();
  {
    std::lock_guard lock(mu_);
    if (envelope.from == to_string(NodeKind::UIA)) {
      envelope.from = find_agent_locked(NodeKind::UIA).value_or("runtime");
    }
    auto c = clients_.find(envelope.to);
    if (c == clients_.end()) return;
    c->second.inbox.push_back(envelope);
    cv_.notify_all();
  }
  monitor_.on_client_post(envelope);
}

void Runtime::emit_audit(audit::AuditEvent event) {
  if (event.ts == 0) event.ts = clock_.now_ms();
  std::function<void(audit::AuditEvent)> sink;
  {
    std::lock_guard lock(hooks_mu_);
    sink = audit_sink_;
  }
  if (sink) sink(std::move(event));
}

bool Runtime::process_one(const std::string& agent_id) {
  MessageEnvelope env;
  AgentDescriptor self;
  std::string internal;
  std::shared_ptr<const Behavior> behavior;
  std::optional<NodeKind> sender;
  {
    std::lock_guard lock(mu_);
    auto it = agents_.find(agent_id);
    if (it == agents_.end()) return false;
    Slot& slot = it->second;
    if (slot.busy || slot.state.lifecycle != Lifecycle::Active || slot.state.mailbox.empty()) {
      return false;
    }
    env = std::move(slot.state.mailbox.front());
    slot.state.mailbox.pop_front();
    slot.busy = true;
    self = slot.state.descriptor;
    internal = slot.state.internal;
    behavior = slot.behavior;
    sender = env.from == "runtime" ? std::nullopt : kind_of_locked(env.from);
  }

  auto admission = monitor_.before_handle(env);
  std::vector<MessageEnvelope> outgoing;
  std::vector<MessageEnvelope> client_errors = std::move(admission.client_errors);

  if (admission.proceed) {
    PrivilegeSet privileges;
    try {
      privileges = auth_.authenticate(env.credentials);
    } catch (const Error&) {
      // Expired between delivery and handling; the behavior sees no roles.
    }
    AgentContext ctx(self, std::move(privileges), clock_.now_ms(), internal, env, sender,
                     [this](NodeKind k) { return find_agent(k); });
    try {
      behavior->handle(ctx, env);
    } catch (const Error& e) {
      ctx.fail(e.code(), e.detail());
    } catch (const std::exception& e) {
      ctx.fail(Errc::Malformed, e.what());
    }

    std::vector<Emission> emissions;
    {
      std::lock_guard lock(mu_);
      for (auto& e : ctx.outbox_) {
        auto to = kind_of_locked(e.to);
        emissions.push_back({std::move(e), self.kind, to});
      }
    }
    auto release = monitor_.after_handle(env, std::move(emissions), ctx.failure());
    outgoing = std::move(release.deliver);
    client_errors.insert(client_errors.end(), release.client_errors.begin(),
                         release.client_errors.end());
    internal = std::move(ctx.internal_);
  }

  {
    std::lock_guard lock(mu_);
    if (auto it = agents_.find(agent_id); it != agents_.end()) {
      it->second.state.internal = std::move(internal);
      it->second.busy = false;
    }
    cv_.notify_all();
  }

  std::function<void(MessageEnvelope&)> interceptor;
  {
    std::lock_guard lock(hooks_mu_);
    interceptor = interceptor_;
  }
  for (auto& e : outgoing) {
    if (interceptor) interceptor(e);
    deliver(std::move(e));
  }
  for (auto& e : client_errors) post_to_client(std::move(e));
  return true;
}

CheckpointBlob Runtime::checkpoint(const std::string& agent_id) {
  std::unique_lock lock(mu_);
  auto it = agents_.find(agent_id);
  if (it == agents_.end()) throw Error(Errc::AgentUnknown, agent_id);
  cv_.wait(lock, [&] { return !it->second.busy; });
  auto& slot = it->second;
  if (slot.state.lifecycle == Lifecycle::Terminated) throw Error(Errc::AgentTerminated, agent_id);
  slot.state.lifecycle = Lifecycle::Sleeping;
  return encode_checkpoint(slot.state);
}

AgentHandle Runtime::resume(const CheckpointBlob& blob, const std::string& container_id) {
  AgentState state = decode_checkpoint(blob);
  const std::string id = state.descriptor.agent_id;
  std::unique_lock lock(mu_);
  auto c = containers_.find(container_id);
  if (c == containers_.end()) throw Error(Errc::NoSuchContainer, container_id);
  if (clients_.count(id)) throw Error(Errc::DuplicateAgentId, id);

  auto it = agents_.find(id);
  if (it != agents_.end()) {
    cv_.wait(lock, [&] { return !it->second.busy; });
    Slot& slot = it->second;
    if (slot.state.lifecycle != Lifecycle::Sleeping) {
      throw Error(Errc::DuplicateAgentId, id + " is " + std::string(to_string(slot.state.lifecycle)));
    }
    // Mail that arrived while the agent slept after the checkpoint is kept.
    const auto& held = slot.state.mailbox;
    if (held.size() > state.mailbox.size() &&
        std::equal(state.mailbox.begin(), state.mailbox.end(), held.begin())) {
      state.mailbox.insert(state.mailbox.end(), held.begin() + state.mailbox.size(), held.end());
    }
    if (auto old = containers_.find(slot.container); old != containers_.end()) {
      old->second.hosted.erase(id);
    }
  } else {
    auto behavior = behaviors_ ? behaviors_(state.descriptor.kind) : nullptr;
    if (!behavior) throw Error(Errc::ValidationFailure, "no behavior for checkpointed agent");
    Slot slot;
    slot.behavior = std::move(behavior);
    it = agents_.emplace(id, std::move(slot)).first;
  }
  state.lifecycle = Lifecycle::Active;
  it->second.state = std::move(state);
  it->second.container = container_id;
  c->second.hosted.insert(id);
  schedule_locked(id, it->second);
  cv_.notify_all();
  return {id, container_id};
}

Lifecycle Runtime::terminate(const std::string& agent_id) {
  std::lock_guard lock(mu_);
  auto it = agents_.find(agent_id);
  if (it == agents_.end()) throw Error(Errc::AgentUnknown, agent_id);
  auto& s = it->second.state;
  if (s.lifecycle == Lifecycle::Terminated) throw Error(Errc::IllegalTransition, "already terminated");
  s.lifecycle = Lifecycle::Terminated;
  s.mailbox.clear();
  cv_.notify_all();
  return s.lifecycle;
}

Lifecycle Runtime::sleep(const std::string& agent_id) {
  std::lock_guard lock(mu_);
  auto it = agents_.find(agent_id);
  if (it == agents_.end()) throw Error(Errc::AgentUnknown, agent_id);
  auto& s = it->second.state;
  if (s.lifecycle != Lifecycle::Active) {
    throw Error(Errc::IllegalTransition, "sleep from " + std::string(to_string(s.lifecycle)));
  }
  s.lifecycle = Lifecycle::Sleeping;
  return s.lifecycle;
}

Lifecycle Runtime::wake(const std::string& agent_id) {
  std::lock_guard lock(mu_);
  auto it = agents_.find(agent_id);
  if (it == agents_.end()) throw Error(Errc::AgentUnknown, agent_id);
  auto& s = it->second.state;
  if (s.lifecycle != Lifecycle::Sleeping) {
    throw Error(Errc::IllegalTransition, "wake from " + std::string(to_string(s.lifecycle)));
  }
  s.lifecycle = Lifecycle::Active;
  schedule_locked(agent_id, it->second);
  return s.lifecycle;
}

void Runtime::open_client(const std::string& session_id, const std::string& principal,
                          const std::string& container_id) {
  std::lock_guard lock(mu_);
  auto c = containers_.find(container_id);
  if (c == containers_.end()) throw Error(Errc::NoSuchContainer, container_id);
  if (clients_.count(session_id) || agents_.count(session_id)) {
    throw Error(Errc::DuplicateAgentId, session_id);
  }
  clients_[session_id] = ClientEndpoint{principal, container_id, {}};
}

void Runtime::close_client(const std::string& session_id) {
  std::lock_guard lock(mu_);
  clients_.erase(session_id);
}

std::vector<MessageEnvelope> Runtime::client_inbox(const std::string& session_id) const {
  std::lock_guard lock(mu_);
  auto c = clients_.find(session_id);
  if (c == clients_.end()) return {};
  return {c->second.inbox.begin(), c->second.inbox.end()};
}

std::optional<MessageEnvelope> Runtime::await_client(const std::string& session_id,
                                                     const std::string& correlation_id,
                                                     std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  auto take = [&]() -> std::optional<MessageEnvelope> {
    auto c = clients_.find(session_id);
    if (c == clients_.end()) return std::nullopt;
    auto& inbox = c->second.inbox;
    for (auto it = inbox.begin(); it != inbox.end(); ++it) {
      if (it->correlation_id == correlation_id &&
          (it->kind == MessageKind::PRESENT || it->kind == MessageKind::ERROR)) {
        MessageEnvelope e = std::move(*it);
        inbox.erase(it);
        return e;
      }
    }
    return std::nullopt;
  };

  if (options_.mode == Mode::Deterministic) {
    for (;;) {
      run_until_idle();
      tick();
      {
        std::lock_guard lock(mu_);
        if (auto e = take()) return e;
      }
      if (std::chrono::steady_clock::now() >= deadline) return std::nullopt;
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
  }
  std::unique_lock lock(mu_);
  std::optional<MessageEnvelope> found;
  cv_.wait_until(lock, deadline, [&] { return (found = take()).has_value(); });
  return found;
}

bool Runtime::step() {
  std::string next;
  {
    std::lock_guard lock(mu_);
    auto ready = [](const Slot& s) {
      return !s.busy && s.state.lifecycle == Lifecycle::Active && !s.state.mailbox.empty();
    };
    auto it = agents_.upper_bound(cursor_);
    for (std::size_t n = 0; n < agents_.size(); ++n, ++it) {
      if (it == agents_.end()) it = agents_.begin();
      if (ready(it->second)) {
        next = it->first;
        break;
      }
    }
    if (next.empty()) return false;
    cursor_ = next;
  }
  process_one(next);
  tick();
  return true;
}

std::size_t Runtime::run_until_idle(std::size_t max_steps) {
  std::size_t n = 0;
  while (n < max_steps && step()) ++n;
  return n;
}

void Runtime::drain() {
  if (options_.mode == Mode::Deterministic) {
    run_until_idle();
    return;
  }
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return ready_.empty() && in_flight_ == 0; });
}

void Runtime::tick() {
  for (auto& e : monitor_.check_deadlines(clock_.now_ms())) post_to_client(std::move(e));
}

std::string Runtime::next_msg_id() { return "m-" + std::to_string(++msg_seq_); }
std::string Runtime::next_correlation_id() { return "c-" + std::to_string(++corr_seq_); }

std::optional<AgentState> Runtime::agent_state(const std::string& agent_id) const {
  std::lock_guard lock(mu_);
  auto it = agents_.find(agent_id);
  if (it == agents_.end()) return std::nullopt;
  return it->second.state;
}

std::optional<std::string> Runtime::container_of(const std::string& agent_id) const {
  std::lock_guard lock(mu_);
  if (auto it = agents_.find(agent_id); it != agents_.end()) return it->second.container;
  if (auto c = clients_.find(agent_id); c != clients_.end()) return c->second.container;
  return std::nullopt;
}

std::optional<NodeKind> Runtime::kind_of(const std::string& endpoint_id) const {
  std::lock_guard lock(mu_);
  return kind_of_locked(endpoint_id);
}

std::optional<std::string> Runtime::find_agent(NodeKind kind) const {
  std::lock_guard lock(mu_);
  return find_agent_locked(kind);
}

std::vector<std::string> Runtime::agent_ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, _] : agents_) out.push_back(id);
  return out;
}

void Runtime::set_audit_sink(std::function<void(audit::AuditEvent)> sink) {
  std::lock_guard lock(hooks_mu_);
  audit_sink_ = std::move(sink);
}

void Runtime::set_delivery_observer(std::function<void(const MessageEnvelope&)> observer) {
  std::lock_guard lock(hooks_mu_);
  observer_ = std::move(observer);
}

void Runtime::set_outbound_interceptor(std::function<void(MessageEnvelope&)> interceptor) {
  std::lock_guard lock(hooks_mu_);
  interceptor_ = std::move(interceptor);
}

void Runtime::worker_loop() {
  for (;;) {
    std::string id;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return stopping_ || !ready_.empty(); });
      if (stopping_) return;
      id = std::move(ready_.front());
      ready_.pop_front();
    }
    process_one(id);
    std::lock_guard lock(mu_);
    auto it = agents_.find(id);
    const bool more = it != agents_.end() && it->second.state.lifecycle == Lifecycle::Active &&
                      !it->second.state.mailbox.empty();
    if (more) {
      ready_.push_back(id);
    } else {
      if (it != agents_.end()) it->second.scheduled = false;
      --in_flight_;
    }
    cv_.notify_all();
  }
}

void Runtime::ticker_loop() {
  std::unique_lock lock(mu_);
  while (!stopping_) {
    cv_.wait_for(lock, std::chrono::milliseconds(options_.tick_ms), [&] { return stopping_; });
    if (stopping_) return;
    lock.unlock();
    tick();
    lock.lock();
  }
}

}  // namespace imobe::runtime
