#pragma once

// Reactive logic of the agents: UIA (request intake and presentation), AA
// and SA (job delegation), AssA (retrieval and attainment computation), SAA
// (audit, anomaly flags, accounts) and the adapter that fronts the store.
//
// The pure functions carry the decisions; the Behavior classes only move
// envelopes and keep pending work in the agent's internal state.

#include <memory>
#include <set>
#include <string>
#include <vector>

#include "imobe/audit.hpp"
#include "imobe/auth.hpp"
#include "imobe/runtime.hpp"
#include "imobe/store.hpp"

namespace imobe::behaviors {

enum class ScopeKind { CourseReport, StudentResult, ItemBreakdown };

std::string_view to_string(ScopeKind kind);
// Throws Error(UnsupportedScope).
ScopeKind scope_kind_from_string(std::string_view name);

struct Scope {
  ScopeKind kind = ScopeKind::CourseReport;
  std::string student_id;  // StudentResult
  std::string item_id;     // ItemBreakdown

  bool operator==(const Scope&) const = default;
};

struct AssessmentJob {
  std::string correlation_id;
  std::string requested_by;
  std::string session;  // client endpoint the result is presented to
  std::string course_id;
  Scope scope;
  double threshold = domain::kDefaultThreshold;

  bool operator==(const AssessmentJob&) const = default;
};

nlohmann::json to_json(const Scope& s);
Scope scope_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AssessmentJob& job);
AssessmentJob job_from_json(const nlohmann::json& j);

// Students may only request their own StudentResult; academicians may
// request any scope; nobody else may request assessments. Throws
// Error(ScopeForbidden).
void authorize_scope(const AssessmentJob& job, const std::set<Role>& roles);

// Data classes a scope needs: "scores", "scores(<student>)", "items",
// "hierarchy".
std::vector<std::string> data_classes(const Scope& scope);

// DATA_RETRIEVE_REQUEST payloads produced by the delegates.
nlohmann::json aa_handle(const AssessmentJob& job, const std::string& reply_to);
// Throws Error(ScopeForbidden) unless the job is the owner's StudentResult.
nlohmann::json sa_handle(const AssessmentJob& job, const std::string& owner,
                         const std::string& reply_to);

// The store query AssA issues for a retrieval request.
store::StoreQuery assa_query(const AssessmentJob& job, const std::vector<std::string>& classes);
// Computes the result document for the job from the retrieved records.
// Throws Error(Malformed | UnknownCourse | UnknownItem | EmptyCohort | ...).
nlohmann::json assa_compute(const AssessmentJob& job, const std::vector<store::Record>& records);

// Appends to the log; a failing append is retried once and then dropped so
// that auditing never fails the main path.
std::optional<audit::AuditLog::Recorded> saa_record(audit::AuditLog& log, audit::AuditEvent event,
                                                    const audit::AnomalyRule& rule);

enum class AccountOp { Create, Disable, Enable, SetRoles };

AccountOp account_op_from_string(std::string_view name);

struct AccountRequest {
  AccountOp op = AccountOp::Create;
  std::string principal;
  std::set<Role> roles;
  std::string secret;  // Create only
};

// Throws Error(Unauthorized | UnknownPrincipal | DuplicatePrincipal |
// ValidationFailure). Records one AccountChange event carrying the profile
// (without secret material).
store::UserProfile saa_manage_account(store::Store& store, audit::AuditLog& log,
                                      const audit::AnomalyRule& rule, const AccountRequest& req,
                                      const Credentials& caller);

// Behaviors.
class UiaBehavior final : public runtime::Behavior {
 public:
  void handle(runtime::AgentContext& ctx, const runtime::MessageEnvelope& e) const override;
};

class AaBehavior final : public runtime::Behavior {
 public:
  void handle(runtime::AgentContext& ctx, const runtime::MessageEnvelope& e) const override;
};

class SaBehavior final : public runtime::Behavior {
 public:
  std::string initial_state(const Credentials& owner) const override;
  void handle(runtime::AgentContext& ctx, const runtime::MessageEnvelope& e) const override;
};

class AssaBehavior final : public runtime::Behavior {
 public:
  void handle(runtime::AgentContext& ctx, const runtime::MessageEnvelope& e) const override;
};

class StoreAdapter final : public runtime::Behavior {
 public:
  explicit StoreAdapter(const store::Store& store) : store_(store) {}
  void handle(runtime::AgentContext& ctx, const runtime::MessageEnvelope& e) const override;

 private:
  const store::Store& store_;
};

class SaaBehavior final : public runtime::Behavior {
 public:
  SaaBehavior(audit::AuditLog& log, audit::AnomalyRule rule) : log_(log), rule_(rule) {}
  void handle(runtime::AgentContext& ctx, const runtime::MessageEnvelope& e) const override;

 private:
  audit::AuditLog& log_;
  audit::AnomalyRule rule_;
};

// Factory wiring every kind to its behavior.
runtime::BehaviorFactory make_factory(const store::Store& store, audit::AuditLog& log,
                                      audit::AnomalyRule rule);

}  // namespace imobe::behaviors
