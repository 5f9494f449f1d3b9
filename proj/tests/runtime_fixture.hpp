#pragma once

// Shared scaffolding for runtime-level tests: an authenticator over a fixed
// directory and a recording behavior for every node kind.

#include <map>
#include <memory>

#include "imobe/crypto.hpp"
#include "imobe/runtime.hpp"

namespace fixture {

using namespace imobe;
using namespace imobe::runtime;

// Appends each handled envelope's msg_id and payload to a hash chain and a
// list, so the final state depends on the exact order of handling.
class Recorder final : public Behavior {
 public:
  void handle(AgentContext& ctx, const MessageEnvelope& e) const override {
    auto s = ctx.state();
    const std::string prev = s.value("chain", std::string{});
    s["chain"] = crypto::to_hex(crypto::sha256(prev + e.msg_id + e.payload.dump()));
    s["seen"].push_back(e.payload.value("n", -1));
    ctx.set_state(s);
  }
};

struct World {
  ManualClock clock;
  std::map<std::string, PrincipalRecord> users{
      {"alice", {"alice", {Role::Academician}, true}},
      {"sam", {"sam", {Role::Student}, true}},
      {"root", {"root", {Role::Administrator}, true}},
      {"ghost", {"ghost", {Role::Student}, false}},
  };
  Authenticator auth{"test-secret", 3600, clock};
  std::mutex audit_mu;
  std::vector<audit::AuditEvent> audits;
  std::unique_ptr<Runtime> rt;

  explicit World(Mode mode = Mode::Deterministic, BehaviorFactory factory = nullptr) {
    auth.set_directory([this](const std::string& p) -> std::optional<PrincipalRecord> {
      auto it = users.find(p);
      if (it == users.end()) return std::nullopt;
      return it->second;
    });
    if (!factory) {
      auto rec = std::make_shared<Recorder>();
      factory = [rec](NodeKind) { return rec; };
    }
    RuntimeOptions o;
    o.mode = mode;
    o.workers = 4;
    rt = std::make_unique<Runtime>(auth, clock, factory, o);
    rt->set_audit_sink([this](audit::AuditEvent e) {
      std::lock_guard lock(audit_mu);
      audits.push_back(std::move(e));
    });
  }

  Credentials system() { return auth.issue(std::string(kSystemPrincipal)); }

  AgentHandle spawn(const std::string& id, NodeKind kind, const std::string& container = "main") {
    return rt->dispatch(make_descriptor(id, kind, container), container, system());
  }

  MessageEnvelope envelope(const std::string& from, const std::string& to, MessageKind kind,
                           const Credentials& creds, int n = 0, std::string corr = "c-x") {
    MessageEnvelope e;
    e.correlation_id = std::move(corr);
    e.from = from;
    e.to = to;
    e.kind = kind;
    e.credentials = creds;
    e.payload = {{"n", n}};
    return e;
  }

  std::size_t audit_count(audit::AuditAction a) {
    std::lock_guard lock(audit_mu);
    std::size_t n = 0;
    for (const auto& e : audits) n += e.action == a;
    return n;
  }

};

}  // namespace fixture
