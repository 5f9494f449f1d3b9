#include "imobe/behaviors.hpp"

#include "imobe/error.hpp"
#include "imobe/json_util.hpp"

namespace imobe::behaviors {

using nlohmann::json;
using protocol::MessageKind;
using runtime::AgentContext;
using runtime::MessageEnvelope;

std::string_view to_string(ScopeKind kind) {
  switch (kind) {
    case ScopeKind::CourseReport: return "CourseReport";
    case ScopeKind::StudentResult: return "StudentResult";
    case ScopeKind::ItemBreakdown: return "ItemBreakdown";
  }
  return "?";
}

ScopeKind scope_kind_from_string(std::string_view name) {
  for (auto k : {ScopeKind::CourseReport, ScopeKind::StudentResult, ScopeKind::ItemBreakdown}) {
    if (to_string(k) == name) return k;
  }
  throw Error(Errc::UnsupportedScope, "unsupported scope '" + std::string(name) + "'");
}

json to_json(const Scope& s) {
  json j{{"type", to_string(s.kind)}};
  if (s.kind == ScopeKind::StudentResult) j["student_id"] = s.student_id;
  if (s.kind == ScopeKind::ItemBreakdown) j["item_id"] = s.item_id;
  return j;
}

Scope scope_from_json(const json& j) {
  Scope s;
  s.kind = scope_kind_from_string(jsonutil::get_string(j, "type", Errc::MissingField));
  if (s.kind == ScopeKind::StudentResult) {
    s.student_id = jsonutil::get_string(j, "student_id", Errc::MissingField);
  }
  if (s.kind == ScopeKind::ItemBreakdown) {
    s.item_id = jsonutil::get_string(j, "item_id", Errc::MissingField);
  }
  return s;
}

json to_json(const AssessmentJob& job) {
  return {{"correlation_id", job.correlation_id}, {"requested_by", job.requested_by},
          {"session", job.session},               {"course_id", job.course_id},
          {"scope", to_json(job.scope)},          {"threshold", job.threshold}};
}

AssessmentJob job_from_json(const json& j) {
  AssessmentJob job;
  job.correlation_id = jsonutil::get_string(j, "correlation_id", Errc::MissingField);
  job.requested_by = jsonutil::get_string(j, "requested_by", Errc::MissingField);
  job.session = jsonutil::opt_string(j, "session");
  job.course_id = jsonutil::get_string(j, "course_id", Errc::MissingField);
  job.scope = scope_from_json(jsonutil::field(j, "scope", Errc::MissingField));
  if (j.contains("threshold")) job.threshold = jsonutil::get_number(j, "threshold");
  return job;
}

void authorize_scope(const AssessmentJob& job, const std::set<Role>& roles) {
  if (roles.count(Role::Academician) || roles.count(Role::System)) return;
  if (roles.count(Role::Student)) {
    if (job.scope.kind != ScopeKind::StudentResult) {
      throw Error(Errc::ScopeForbidden, "students may only request their own results");
    }
    if (job.scope.student_id != job.requested_by) {
      throw Error(Errc::ScopeForbidden, job.requested_by + " may not read results of " +
                                            job.scope.student_id);
    }
    return;
  }
  throw Error(Errc::ScopeForbidden, job.requested_by + " may not request assessments");
}

std::vector<std::string> data_classes(const Scope& scope) {
  switch (scope.kind) {
    case ScopeKind::CourseReport: return {"scores", "items", "hierarchy"};
    case ScopeKind::StudentResult: return {"scores(" + scope.student_id + ")", "items"};
    case ScopeKind::ItemBreakdown: return {"scores", "items"};
  }
  throw Error(Errc::UnsupportedScope, "unsupported scope");
}

json aa_handle(const AssessmentJob& job, const std::string& reply_to) {
  return {{"job", to_json(job)}, {"data_classes", data_classes(job.scope)}, {"reply_to", reply_to}};
}

json sa_handle(const AssessmentJob& job, const std::string& owner, const std::string& reply_to) {
  if (job.requested_by != owner) {
    throw Error(Errc::ScopeForbidden, "job of " + job.requested_by + " reached the agent of " + owner);
  }
  authorize_scope(job, {Role::Student});
  return aa_handle(job, reply_to);
}

store::StoreQuery assa_query(const AssessmentJob& job, const std::vector<std::string>& classes) {
  store::StoreQuery q;
  q.correlation_id = job.correlation_id;
  for (const auto& c : classes) {
    if (c == "scores") {
      q.selectors.push_back({"score", {{"course_id", job.course_id}}});
    } else if (c.rfind("scores(", 0) == 0 && c.back() == ')') {
      q.selectors.push_back({"score",
                             {{"course_id", job.course_id},
                              {"student_id", c.substr(7, c.size() - 8)}}});
    } else if (c == "items") {
      q.selectors.push_back({"item", {{"course_id", job.course_id}}});
    } else if (c == "hierarchy") {
      q.selectors.push_back({"outcome", {}});
    } else {
      throw Error(Errc::UnsupportedScope, "unknown data class '" + c + "'");
    }
  }
  return q;
}

json assa_compute(const AssessmentJob& job, const std::vector<store::Record>& records) {
  std::vector<domain::Score> scores;
  std::vector<domain::AssessmentItem> items;
  std::vector<domain::OutcomeNode> hierarchy;
  for (const auto& r : records) {
    try {
      if (r.key.rfind("score/", 0) == 0) {
        scores.push_back(domain::score_from_json(r.doc));
      } else if (r.key.rfind("item/", 0) == 0) {
        items.push_back(domain::item_from_json(r.doc));
      } else if (r.key.rfind("outcome/", 0) == 0) {
        hierarchy.push_back(domain::outcome_from_json(r.doc));
      } else {
        throw Error(Errc::Malformed, "unexpected record");
      }
    } catch (const Error& e) {
      throw Error(Errc::Malformed, "record " + r.key + ": " + e.detail());
    }
  }
  switch (job.scope.kind) {
    case ScopeKind::CourseReport:
      return domain::to_json(
          domain::build_report(job.course_id, scores, items, hierarchy, job.threshold));
    case ScopeKind::StudentResult:
      return domain::to_json(domain::build_student_result(job.course_id, job.scope.student_id,
                                                          scores, items, job.threshold));
    case ScopeKind::ItemBreakdown:
      return domain::to_json(
          domain::build_item_breakdown(job.course_id, job.scope.item_id, scores, items));
  }
  throw Error(Errc::UnsupportedScope, "unsupported scope");
}

std::optional<audit::AuditLog::Recorded> saa_record(audit::AuditLog& log, audit::AuditEvent event,
                                                    const audit::AnomalyRule& rule) {
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      return log.record(event, rule);
    } catch (const std::exception&) {
    }
  }
  return std::nullopt;
}

AccountOp account_op_from_string(std::string_view name) {
  if (name == "Create") return AccountOp::Create;
  if (name == "Disable") return AccountOp::Disable;
  if (name == "Enable") return AccountOp::Enable;
  if (name == "SetRoles") return AccountOp::SetRoles;
  throw Error(Errc::Malformed, "unknown account operation '" + std::string(name) + "'");
}

store::UserProfile saa_manage_account(store::Store& store, audit::AuditLog& log,
                                      const audit::AnomalyRule& rule, const AccountRequest& req,
                                      const Credentials& caller) {
  const auto key = store::user_key(req.principal);
  store.authorize_write(key, caller);
  if (req.principal.empty() || req.principal == kSystemPrincipal ||
      req.principal.find_first_of(":/ ") != std::string::npos) {
    throw Error(Errc::ValidationFailure, "invalid principal name '" + req.principal + "'");
  }
  const auto existing = store.get(key);
  store::UserProfile profile;
  switch (req.op) {
    case AccountOp::Create:
      if (existing) throw Error(Errc::DuplicatePrincipal, req.principal);
      if (req.secret.empty()) throw Error(Errc::ValidationFailure, "secret is empty");
      profile = store::make_user(req.principal, req.secret, req.roles);
      break;
    case AccountOp::Disable:
    case AccountOp::Enable:
    case AccountOp::SetRoles:
      if (!existing) throw Error(Errc::UnknownPrincipal, req.principal);
      profile = store::user_from_json(existing->doc);
      if (req.op == AccountOp::SetRoles) profile.roles = req.roles;
      if (req.op != AccountOp::SetRoles) profile.enabled = req.op == AccountOp::Enable;
      break;
  }
  store.put(key, store::to_json(profile), caller);

  json shown = store::to_json(profile);
  shown.erase("salt");
  shown.erase("secret_hash");
  static constexpr const char* kOps[] = {"Create", "Disable", "Enable", "SetRoles"};
  saa_record(log,
             {0, store.clock().now_ms(), caller.principal, audit::AuditAction::AccountChange, key,
              {{"op", kOps[static_cast<int>(req.op)]}, {"profile", shown}}},
             rule);
  return profile;
}

// ---------------------------------------------------------------------------

namespace {

// Pending work is kept per correlation id in the agent's internal state.
json take_pending(AgentContext& ctx, const std::string& correlation_id) {
  auto s = ctx.state();
  auto& pending = s["pending"];
  if (!pending.is_object() || !pending.contains(correlation_id)) {
    throw Error(Errc::ProtocolViolation, "no pending job " + correlation_id);
  }
  json entry = pending[correlation_id];
  pending.erase(correlation_id);
  ctx.set_state(s);
  return entry;
}

void put_pending(AgentContext& ctx, const std::string& correlation_id, json entry) {
  auto s = ctx.state();
  s["pending"][correlation_id] = std::move(entry);
  ctx.set_state(s);
}

std::string require_agent(AgentContext& ctx, NodeKind kind) {
  auto id = ctx.lookup(kind);
  if (!id) throw Error(Errc::AgentUnknown, "no active " + std::string(to_string(kind)));
  return *id;
}

}  // namespace

void UiaBehavior::handle(AgentContext& ctx, const MessageEnvelope& e) const {
  switch (e.kind) {
    case MessageKind::LOGIN: {
      auto s = ctx.state();
      s["sessions"][e.from] = jsonutil::get_string(e.payload, "delegate", Errc::MissingField);
      ctx.set_state(s);
      return;
    }
    case MessageKind::ASSESS_REQUEST: {
      const auto s = ctx.state();
      const auto sessions = s.value("sessions", json::object());
      if (!sessions.contains(e.from)) {
        throw Error(Errc::ProtocolViolation, "session " + e.from + " has not logged in");
      }
      AssessmentJob job;
      job.correlation_id = e.correlation_id;
      job.requested_by = e.credentials.principal;
      job.session = e.from;
      job.course_id = jsonutil::get_string(e.payload, "course_id", Errc::MissingField);
      job.scope = scope_from_json(jsonutil::field(e.payload, "scope", Errc::MissingField));
      if (e.payload.contains("threshold")) {
        job.threshold = jsonutil::get_number(e.payload, "threshold");
      }
      authorize_scope(job, ctx.privileges().roles);
      ctx.send(sessions[e.from].get<std::string>(), MessageKind::JOB_DELEGATE,
               {{"job", to_json(job)}});
      return;
    }
    case MessageKind::DATA_RETRIEVE_REQUEST:
      // Relay for student agents, which have no route to AssA of their own.
      ctx.send(require_agent(ctx, NodeKind::AssA), MessageKind::DATA_RETRIEVE_REQUEST, e.payload);
      return;
    case MessageKind::JOB_RESULT: {
      const auto job = job_from_json(jsonutil::field(e.payload, "job", Errc::MissingField));
      ctx.send(job.session, MessageKind::PRESENT,
               {{"correlation_id", e.correlation_id},
                {"result", jsonutil::field(e.payload, "result", Errc::MissingField)}});
      return;
    }
    default:
      return;  // runtime notices; the workflow monitor already acted on them
  }
}

void AaBehavior::handle(AgentContext& ctx, const MessageEnvelope& e) const {
  switch (e.kind) {
    case MessageKind::JOB_DELEGATE: {
      const auto job = job_from_json(jsonutil::field(e.payload, "job", Errc::MissingField));
      put_pending(ctx, e.correlation_id, e.from);
      ctx.send(require_agent(ctx, NodeKind::AssA), MessageKind::DATA_RETRIEVE_REQUEST,
               aa_handle(job, ctx.self().agent_id));
      return;
    }
    case MessageKind::ASSESS_RESULT: {
      const auto uia = take_pending(ctx, e.correlation_id).get<std::string>();
      ctx.send(uia, MessageKind::JOB_RESULT, e.payload);
      return;
    }
    default:
      return;
  }
}

std::string SaBehavior::initial_state(const Credentials& owner) const {
  return json{{"owner", owner.principal}}.dump();
}

void SaBehavior::handle(AgentContext& ctx, const MessageEnvelope& e) const {
  switch (e.kind) {
    case MessageKind::JOB_DELEGATE: {
      const auto job = job_from_json(jsonutil::field(e.payload, "job", Errc::MissingField));
      const auto owner = ctx.state().value("owner", std::string{});
      auto request = sa_handle(job, owner, ctx.self().agent_id);
      put_pending(ctx, e.correlation_id, e.from);
      ctx.send(e.from, MessageKind::DATA_RETRIEVE_REQUEST, std::move(request));
      return;
    }
    case MessageKind::ASSESS_RESULT: {
      const auto uia = take_pending(ctx, e.correlation_id).get<std::string>();
      ctx.send(uia, MessageKind::JOB_RESULT, e.payload);
      return;
    }
    default:
      return;
  }
}

void AssaBehavior::handle(AgentContext& ctx, const MessageEnvelope& e) const {
  switch (e.kind) {
    case MessageKind::DATA_RETRIEVE_REQUEST: {
      const auto job = job_from_json(jsonutil::field(e.payload, "job", Errc::MissingField));
      const auto& classes = jsonutil::field(e.payload, "data_classes", Errc::MissingField);
      const auto reply_to = jsonutil::get_string(e.payload, "reply_to", Errc::MissingField);
      auto query = assa_query(job, classes.get<std::vector<std::string>>());
      auto store = ctx.lookup(NodeKind::Store);
      if (!store) throw Error(Errc::StoreUnavailable, "no store endpoint");
      put_pending(ctx, e.correlation_id, {{"job", to_json(job)}, {"reply_to", reply_to}});
      ctx.send(*store, MessageKind::STORE_QUERY, store::to_json(query));
      return;
    }
    case MessageKind::STORE_RESULT: {
      const auto entry = take_pending(ctx, e.correlation_id);
      const auto job = job_from_json(entry.at("job"));
      std::vector<store::Record> records;
      const auto& list = jsonutil::field(e.payload, "records", Errc::MissingField);
      if (!list.is_array()) throw Error(Errc::Malformed, "records must be an array");
      for (const auto& r : list) {
        if (!r.is_object() || !r.contains("doc")) throw Error(Errc::Malformed, "malformed record");
        records.push_back({jsonutil::get_string(r, "key"), r.value("version", std::uint64_t{0}),
                           r.value("ts", TimestampMs{0}), r.at("doc")});
      }
      ctx.send(entry.at("reply_to").get<std::string>(), MessageKind::ASSESS_RESULT,
               {{"job", to_json(job)}, {"result", assa_compute(job, records)}});
      return;
    }
    default:
      return;
  }
}

void StoreAdapter::handle(AgentContext& ctx, const MessageEnvelope& e) const {
  if (e.kind != MessageKind::STORE_QUERY) return;
  if (!store_.available()) throw Error(Errc::StoreUnavailable, "store file is gone");
  const auto q = store::store_query_from_json(e.payload);
  const auto caller = ctx.sender_kind().value_or(NodeKind::Client);
  json records = json::array();
  for (const auto& r : store_.query(q, caller)) records.push_back(store::to_json(r));
  ctx.send(e.from, MessageKind::STORE_RESULT, {{"records", std::move(records)}});
}

void SaaBehavior::handle(AgentContext&, const MessageEnvelope& e) const {
  if (e.kind != MessageKind::AUDIT_EVENT) return;
  saa_record(log_, audit::audit_event_from_json(e.payload), rule_);
}

runtime::BehaviorFactory make_factory(const store::Store& store, audit::AuditLog& log,
                                      audit::AnomalyRule rule) {
  auto uia = std::make_shared<UiaBehavior>();
  auto aa = std::make_shared<AaBehavior>();
  auto sa = std::make_shared<SaBehavior>();
  auto assa = std::make_shared<AssaBehavior>();
  auto adapter = std::make_shared<StoreAdapter>(store);
  auto saa = std::make_shared<SaaBehavior>(log, rule);
  return [=](NodeKind kind) -> std::shared_ptr<const runtime::Behavior> {
    switch (kind) {
      case NodeKind::UIA: return uia;
      case NodeKind::AA: return aa;
      case NodeKind::SA: return sa;
      case NodeKind::AssA: return assa;
      case NodeKind::Store: return adapter;
      case NodeKind::SAA: return saa;
      case NodeKind::Client: return nullptr;
    }
    return nullptr;
  };
}

}  // namespace imobe::behaviors
