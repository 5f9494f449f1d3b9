#pragma once

// Wiring of one deployment: configuration, store, audit log, authenticator,
// runtime and the agents living in the main container.

#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "imobe/audit.hpp"
#include "imobe/auth.hpp"
#include "imobe/behaviors.hpp"
#include "imobe/runtime.hpp"
#include "imobe/store.hpp"

namespace imobe {

struct Config {
  std::filesystem::path store_path;  // empty: in-memory
  std::filesystem::path audit_path;  // empty: <store_path>.audit, or in-memory
  std::string listen_address = "127.0.0.1:8080";
  std::string token_secret;
  std::int64_t token_ttl_s = 3600;
  std::int64_t phase_timeout_ms = 5000;
  std::int64_t workflow_budget_ms = 15000;
  std::size_t anomaly_r = 5;
  std::int64_t anomaly_w_s = 60;
  double attainment_threshold = domain::kDefaultThreshold;
  std::size_t workers = 4;

  // Throws Error(Usage) naming the offending key.
  void validate() const;
  void set(const std::string& key, const std::string& value);
};

// key=value lines; '#' starts a comment. Throws Error(Io | Usage).
Config load_config(const std::filesystem::path& path);
Config parse_config(const std::string& text);

class Platform {
 public:
  static constexpr const char* kUia = "uia";
  static constexpr const char* kAssa = "assa";
  static constexpr const char* kSaa = "saa";
  static constexpr const char* kStore = "store";

  Platform(Config config, const Clock& clock, runtime::Mode mode);
  ~Platform();

  const Config& config() const { return config_; }
  const Clock& clock() const { return clock_; }
  Authenticator& auth() { return auth_; }
  store::Store& store() { return *store_; }
  audit::AuditLog& audit_log() { return *audit_; }
  runtime::Runtime& runtime() { return *runtime_; }
  audit::AnomalyRule anomaly_rule() const { return {config_.anomaly_r, config_.anomaly_w_s}; }

  Credentials system_credentials() { return auth_.issue(std::string(kSystemPrincipal)); }

  // Sends an event to the SAA as an AUDIT_EVENT from `from` (an endpoint
  // with a route to SAA). Falls back to recording directly if the SAA does
  // not accept it.
  void audit_from(const std::string& from, audit::AuditEvent event);
  // Records directly; for events raised by the runtime itself.
  void audit_direct(audit::AuditEvent event);

  // Lets queued work, including audit envelopes, finish.
  void settle() { runtime_->drain(); }

 private:
  Config config_;
  const Clock& clock_;
  Authenticator auth_;
  std::unique_ptr<store::Store> store_;
  std::unique_ptr<audit::AuditLog> audit_;
  std::unique_ptr<runtime::Runtime> runtime_;
};

}  // namespace imobe
