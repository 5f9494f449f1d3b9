#pragma once

// Real-time monitoring records kept by the system administrator agent.
//
// The log is append-only; event ids are assigned on append and strictly
// increase. Anomaly flags are derived from the event sequence alone: a
// principal is flagged when its AuthFailure/RouteRejection count inside a
// sliding window of W seconds reaches R+1.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "imobe/clock.hpp"
#include "json.hpp"

namespace imobe::audit {

enum class AuditAction { StoreWrite, AuthFailure, RouteRejection, AccountChange, RequestFailure };

std::string_view to_string(AuditAction action);
AuditAction audit_action_from_string(std::string_view name);

struct AuditEvent {
  std::uint64_t event_id = 0;  // 0 until appended
  TimestampMs ts = 0;
  std::string principal;
  AuditAction action = AuditAction::StoreWrite;
  std::string subject;
  nlohmann::json detail = nlohmann::json::object();

  bool operator==(const AuditEvent&) const = default;
};

nlohmann::json to_json(const AuditEvent& e);
AuditEvent audit_event_from_json(const nlohmann::json& j);

struct AnomalyRule {
  std::size_t max_failures = 5;  // R
  std::int64_t window_s = 60;    // W
};

struct AnomalyFlag {
  std::string principal;
  TimestampMs ts = 0;
  std::uint64_t event_id = 0;  // the event that crossed the limit
  std::size_t count = 0;

  bool operator==(const AnomalyFlag&) const = default;
};

nlohmann::json to_json(const AnomalyFlag& f);

bool counts_toward_anomaly(AuditAction action);

// Pure reference: every flag the rule raises over an event sequence.
std::vector<AnomalyFlag> detect_anomalies(const std::vector<AuditEvent>& events,
                                          const AnomalyRule& rule);

class AuditLog {
 public:
  // In-memory when `path` is empty; otherwise events and flags are appended
  // to the file as NDJSON and reloaded on construction.
  explicit AuditLog(std::filesystem::path path = {});

  struct Recorded {
    AuditEvent event;
    std::optional<AnomalyFlag> flag;
  };

  // Appends `event` (its event_id is overwritten) and evaluates the rule
  // for the event's principal.
  Recorded record(AuditEvent event, const AnomalyRule& rule);

  std::vector<AuditEvent> events(std::uint64_t after_id = 0) const;
  std::vector<AnomalyFlag> flags() const;
  std::size_t count(AuditAction action) const;
  std::size_t size() const;

 private:
  void persist(const nlohmann::json& line);

  mutable std::mutex mu_;
  std::filesystem::path path_;
  std::ofstream out_;
  std::vector<AuditEvent> events_;
  std::vector<AnomalyFlag> flags_;
  std::map<std::string, std::vector<TimestampMs>> failures_;
};

}  // namespace imobe::audit
