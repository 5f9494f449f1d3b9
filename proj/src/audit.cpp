#include "imobe/audit.hpp"

#include <map>

#include "imobe/error.hpp"
#include "imobe/json_util.hpp"

namespace imobe::audit {

using nlohmann::json;

std::string_view to_string(AuditAction action) {
  switch (action) {
    case AuditAction::StoreWrite: return "StoreWrite";
    case AuditAction::AuthFailure: return "AuthFailure";
    case AuditAction::RouteRejection: return "RouteRejection";
    case AuditAction::AccountChange: return "AccountChange";
    case AuditAction::RequestFailure: return "RequestFailure";
  }
  return "?";
}

AuditAction audit_action_from_string(std::string_view name) {
  for (auto a : {AuditAction::StoreWrite, AuditAction::AuthFailure, AuditAction::RouteRejection,
                 AuditAction::AccountChange, AuditAction::RequestFailure}) {
    if (to_string(a) == name) return a;
  }
  throw Error(Errc::Malformed, "unknown audit action '" + std::string(name) + "'");
}

json to_json(const AuditEvent& e) {
  return {{"event_id", e.event_id}, {"ts", e.ts},           {"principal", e.principal},
          {"action", to_string(e.action)}, {"subject", e.subject}, {"detail", e.detail}};
}

AuditEvent audit_event_from_json(const json& j) {
  AuditEvent e;
  if (auto it = j.find("event_id"); it != j.end() && it->is_number_unsigned()) {
    e.event_id = it->get<std::uint64_t>();
  }
  e.ts = jsonutil::get_int(j, "ts");
  e.principal = jsonutil::get_string(j, "principal");
  e.action = audit_action_from_string(jsonutil::get_string(j, "action"));
  e.subject = jsonutil::get_string(j, "subject");
  if (auto it = j.find("detail"); it != j.end()) e.detail = *it;
  return e;
}

json to_json(const AnomalyFlag& f) {
  return {{"principal", f.principal}, {"ts", f.ts}, {"event_id", f.event_id}, {"count", f.count}};
}

bool counts_toward_anomaly(AuditAction action) {
  return action == AuditAction::AuthFailure || action == AuditAction::RouteRejection;
}

namespace {

std::size_t window_count(const std::vector<TimestampMs>& failures, TimestampMs now,
                         const AnomalyRule& rule) {
  std::size_t n = 0;
  for (auto t : failures) {
    if (t > now - rule.window_s * 1000 && t <= now) ++n;
  }
  return n;
}

}  // namespace

std::vector<AnomalyFlag> detect_anomalies(const std::vector<AuditEvent>& events,
                                          const AnomalyRule& rule) {
  std::vector<AnomalyFlag> out;
  std::map<std::string, std::vector<TimestampMs>> failures;
  for (const auto& e : events) {
    if (!counts_toward_anomaly(e.action)) continue;
    auto& ts = failures[e.principal];
    ts.push_back(e.ts);
    const std::size_t n = window_count(ts, e.ts, rule);
    if (n == rule.max_failures + 1) out.push_back({e.principal, e.ts, e.event_id, n});
  }
  return out;
}

AuditLog::AuditLog(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.empty()) return;
  if (std::ifstream in(path_); in) {
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded()) throw Error(Errc::Malformed, "corrupt audit log line");
      if (j.contains("flag")) {
        const auto& f = j["flag"];
        flags_.push_back({f.at("principal"), f.at("ts"), f.at("event_id"), f.at("count")});
      } else {
        events_.push_back(audit_event_from_json(j));
        if (counts_toward_anomaly(events_.back().action)) {
          failures_[events_.back().principal].push_back(events_.back().ts);
        }
      }
    }
  }
  out_.open(path_, std::ios::app);
  if (!out_) throw Error(Errc::StoreOpenFailure, "cannot open audit log " + path_.string());
}

void AuditLog::persist(const json& line) {
  if (!out_.is_open()) return;
  out_ << line.dump() << '\n';
  out_.flush();
}

AuditLog::Recorded AuditLog::record(AuditEvent event, const AnomalyRule& rule) {
  std::lock_guard lock(mu_);
  event.event_id = events_.empty() ? 1 : events_.back().event_id + 1;
  events_.push_back(event);
  persist(to_json(event));

  Recorded out{event, std::nullopt};
  if (counts_toward_anomaly(event.action)) {
    auto& ts = failures_[event.principal];
    ts.push_back(event.ts);
    const auto n = window_count(ts, event.ts, rule);
    if (n == rule.max_failures + 1) {
      out.flag = AnomalyFlag{event.principal, event.ts, event.event_id, n};
      flags_.push_back(*out.flag);
      persist({{"flag", to_json(*out.flag)}});
    }
  }
  return out;
}

std::vector<AuditEvent> AuditLog::events(std::uint64_t after_id) const {
  std::lock_guard lock(mu_);
  std::vector<AuditEvent> out;
  for (const auto& e : events_) {
    if (e.event_id > after_id) out.push_back(e);
  }
  return out;
}

std::vector<AnomalyFlag> AuditLog::flags() const {
  std::lock_guard lock(mu_);
  return flags_;
}

std::size_t AuditLog::count(AuditAction action) const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (const auto& e : events_) n += e.action == action ? 1 : 0;
  return n;
}

std::size_t AuditLog::size() const {
  std::lock_guard lock(mu_);
  return events_.size();
}

}  // namespace imobe::audit
