#include "imobe/platform.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "imobe/crypto.hpp"
#include "imobe/error.hpp"

namespace imobe {

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || p != value.data() + value.size()) {
    throw Error(Errc::Usage, key + ": '" + value + "' is not a number");
  }
  return out;
}

}  // namespace

void Config::set(const std::string& key, const std::string& value) {
  if (key == "store_path") store_path = value;
  else if (key == "audit_path") audit_path = value;
  else if (key == "listen_address") listen_address = value;
  else if (key == "token_secret") token_secret = value;
  else if (key == "token_ttl_s") token_ttl_s = parse_number<std::int64_t>(key, value);
  else if (key == "phase_timeout_ms") phase_timeout_ms = parse_number<std::int64_t>(key, value);
  else if (key == "workflow_budget_ms") workflow_budget_ms = parse_number<std::int64_t>(key, value);
  else if (key == "anomaly_r") anomaly_r = parse_number<std::size_t>(key, value);
  else if (key == "anomaly_w_s") anomaly_w_s = parse_number<std::int64_t>(key, value);
  else if (key == "attainment_threshold") attainment_threshold = parse_number<double>(key, value);
  else if (key == "workers") workers = parse_number<std::size_t>(key, value);
  else throw Error(Errc::Usage, "unknown config key '" + key + "'");
}

void Config::validate() const {
  if (token_ttl_s <= 0) throw Error(Errc::Usage, "token_ttl_s must be > 0");
  if (phase_timeout_ms <= 0) throw Error(Errc::Usage, "phase_timeout_ms must be > 0");
  if (workflow_budget_ms <= 0) throw Error(Errc::Usage, "workflow_budget_ms must be > 0");
  if (anomaly_w_s <= 0) throw Error(Errc::Usage, "anomaly_w_s must be > 0");
  if (!(attainment_threshold > 0.0 && attainment_threshold < 1.0)) {
    throw Error(Errc::Usage, "attainment_threshold must lie in (0,1)");
  }
  if (workers == 0) throw Error(Errc::Usage, "workers must be > 0");
}

Config parse_config(const std::string& text) {
  Config c;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(Errc::Usage, "config line " + std::to_string(n) + ": expected key=value");
    }
    c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

Platform::Platform(Config config, const Clock& clock, runtime::Mode mode)
    : config_(std::move(config)),
      clock_(clock),
      auth_(config_.token_secret.empty() ? crypto::random_hex(32) : config_.token_secret,
            config_.token_ttl_s, clock) {
  config_.validate();
  store_ = std::make_unique<store::Store>(config_.store_path, auth_, clock_);
  auth_.set_directory(store_->directory());

  auto audit_path = config_.audit_path;
  if (audit_path.empty() && !config_.store_path.empty()) {
    audit_path = config_.store_path.string() + ".audit";
  }
  try {
    audit_ = std::make_unique<audit::AuditLog>(audit_path);
  } catch (const Error& e) {
    throw Error(Errc::StoreOpenFailure, e.detail());
  }

  runtime::RuntimeOptions options;
  options.mode = mode;
  options.workers = config_.workers;
  options.timeouts = {config_.phase_timeout_ms, config_.workflow_budget_ms};
  runtime_ = std::make_unique<runtime::Runtime>(
      auth_, clock_, behaviors::make_factory(*store_, *audit_, anomaly_rule()), options);
  runtime_->set_audit_sink([this](audit::AuditEvent e) { audit_direct(std::move(e)); });

  const auto sys = system_credentials();
  const std::string main = runtime_->main_container();
  for (auto [id, kind] : {std::pair{kUia, NodeKind::UIA}, {kAssa, NodeKind::AssA},
                          {kSaa, NodeKind::SAA}, {kStore, NodeKind::Store}}) {
    runtime_->dispatch(runtime::make_descriptor(id, kind, main), main, sys);
  }
  // Every store write is mirrored to the SAA before it is acknowledged.
  store_->set_audit_sink([this](audit::AuditEvent e) { audit_from(kStore, std::move(e)); });
}

Platform::~Platform() {
  store_->set_audit_sink(nullptr);
  runtime_->drain();
}

void Platform::audit_from(const std::string& from, audit::AuditEvent event) {
  if (event.ts == 0) event.ts = clock_.now_ms();
  runtime::MessageEnvelope e;
  e.correlation_id = "audit";
  e.from = from;
  e.to = kSaa;
  e.kind = protocol::MessageKind::AUDIT_EVENT;
  // System credentials: authenticating them never consults the store, so
  // this is safe to call while the store holds its write lock.
  e.credentials = system_credentials();
  e.payload = audit::to_json(event);
  if (!runtime_->deliver(std::move(e)).accepted) audit_direct(std::move(event));
}

void Platform::audit_direct(audit::AuditEvent event) {
  if (event.ts == 0) event.ts = clock_.now_ms();
  behaviors::saa_record(*audit_, std::move(event), anomaly_rule());
}

}  // namespace imobe
