#include "imobe/store.hpp"

#include <sstream>

#include "imobe/crypto.hpp"
#include "imobe/error.hpp"
#include "imobe/json_util.hpp"

namespace imobe::store {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kPbkdf2Iterations = 10'000;

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

std::string normalize_prefix(std::string prefix) {
  if (prefix.empty() || prefix.back() != '/') prefix.push_back('/');
  for (auto p : kPrefixes) {
    if (prefix == p) return prefix;
  }
  throw Error(Errc::InvalidKeyPrefix, "prefix '" + prefix + "' is not queryable");
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out || !(out << bytes) || !out.flush()) throw Error(Errc::Io, "cannot write " + p.string());
}

bool may_write(const PrivilegeSet& p, std::string_view key) {
  if (p.has(Role::System)) return true;
  if (starts_with(key, "user/")) return p.has(Role::Administrator);
  return p.has(Role::Academician);
}

}  // namespace

std::string_view to_string(Repository r) { return r == Repository::Data ? "Data" : "UserProfiles"; }

Repository repository_for(std::string_view key) {
  for (auto p : kPrefixes) {
    if (starts_with(key, p) && key.size() > p.size()) {
      return p == "user/" ? Repository::UserProfiles : Repository::Data;
    }
  }
  throw Error(Errc::InvalidKeyPrefix, "key '" + std::string(key) + "' has no known prefix");
}

std::string score_key(std::string_view item_id, std::string_view student_id) {
  return "score/" + std::string(item_id) + "/" + std::string(student_id);
}
std::string item_key(std::string_view id) { return "item/" + std::string(id); }
std::string outcome_key(std::string_view id) { return "outcome/" + std::string(id); }
std::string user_key(std::string_view p) { return "user/" + std::string(p); }

json to_json(const Record& r) {
  return {{"key", r.key}, {"version", r.version}, {"ts", r.ts}, {"doc", r.doc}};
}

json to_json(const StoreQuery& q) {
  json sel = json::array();
  for (const auto& s : q.selectors) {
    json f = json::object();
    for (const auto& [k, v] : s.filter) f[k] = v;
    sel.push_back({{"prefix", s.prefix}, {"filter", f}});
  }
  return {{"correlation_id", q.correlation_id}, {"selectors", sel}};
}

StoreQuery store_query_from_json(const json& j) {
  StoreQuery q;
  q.correlation_id = jsonutil::opt_string(j, "correlation_id");
  const auto& sel = jsonutil::field(j, "selectors", Errc::MissingField);
  if (!sel.is_array()) throw Error(Errc::Malformed, "selectors must be an array");
  for (const auto& s : sel) {
    Selector out;
    out.prefix = jsonutil::get_string(s, "prefix", Errc::MissingField);
    if (auto f = s.find("filter"); f != s.end()) {
      if (!f->is_object()) throw Error(Errc::Malformed, "filter must be an object");
      for (const auto& [k, v] : f->items()) out.filter[k] = v;
    }
    q.selectors.push_back(std::move(out));
  }
  return q;
}

UserProfile make_user(const std::string& principal, const std::string& secret,
                      std::set<Role> roles, bool enabled) {
  UserProfile u;
  u.principal = principal;
  u.roles = std::move(roles);
  u.enabled = enabled;
  u.salt = crypto::random_hex(16);
  u.secret_hash = crypto::to_hex(crypto::pbkdf2_sha256(secret, u.salt, kPbkdf2Iterations));
  return u;
}

bool secret_matches(const UserProfile& user, const std::string& secret) {
  return crypto::equal_ct(
      crypto::to_hex(crypto::pbkdf2_sha256(secret, user.salt, kPbkdf2Iterations)),
      user.secret_hash);
}

json to_json(const UserProfile& u) {
  json roles = json::array();
  for (Role r : u.roles) roles.push_back(to_string(r));
  return {{"principal", u.principal},     {"roles", roles},
          {"enabled", u.enabled},         {"salt", u.salt},
          {"secret_hash", u.secret_hash}, {"last_request", u.last_request}};
}

UserProfile user_from_json(const json& j) {
  UserProfile u;
  u.principal = jsonutil::get_string(j, "principal");
  const auto& roles = jsonutil::field(j, "roles");
  if (!roles.is_array() || roles.empty()) throw Error(Errc::ValidationFailure, "roles must be a non-empty array");
  for (const auto& r : roles) {
    if (!r.is_string()) throw Error(Errc::Malformed, "role must be a string");
    u.roles.insert(role_from_string(r.get<std::string>()));
  }
  if (u.roles.count(Role::System)) throw Error(Errc::ValidationFailure, "System is not an account role");
  const auto& enabled = jsonutil::field(j, "enabled");
  if (!enabled.is_boolean()) throw Error(Errc::Malformed, "enabled must be a boolean");
  u.enabled = enabled.get<bool>();
  u.salt = jsonutil::get_string(j, "salt");
  u.secret_hash = jsonutil::get_string(j, "secret_hash");
  u.last_request = j.value("last_request", json());
  return u;
}

// ---------------------------------------------------------------------------

Store::Store(fs::path log_path, const Authenticator& auth, const Clock& clock)
    : path_(std::move(log_path)), auth_(auth), clock_(clock) {
  if (path_.empty()) return;
  try {
    if (fs::exists(path_)) load_bytes(read_file(path_));
  } catch (const Error& e) {
    throw Error(Errc::StoreOpenFailure, path_.string() + ": " + e.detail());
  }
  if (path_.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path_.parent_path(), ec);
  }
  out_.open(path_, std::ios::app | std::ios::binary);
  if (!out_) throw Error(Errc::StoreOpenFailure, "cannot open " + path_.string());
}

void Store::load_bytes(const std::string& bytes) {
  data_.clear();
  users_.clear();
  log_.clear();
  std::istringstream in(bytes);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw Error(Errc::Malformed, "log line " + std::to_string(n) + " is not JSON");
    }
    Record r{jsonutil::get_string(j, "key"), j.at("version").get<std::uint64_t>(),
             jsonutil::get_int(j, "ts"), j.at("doc")};
    auto& index = repository_for(r.key) == Repository::Data ? data_ : users_;
    if (auto it = index.find(r.key); it != index.end() && it->second.version >= r.version) {
      throw Error(Errc::Malformed, "log line " + std::to_string(n) + " goes back in version");
    }
    apply(std::move(r));
    log_ += line;
    log_ += '\n';
  }
}

void Store::apply(Record r) {
  auto& index = repository_for(r.key) == Repository::Data ? data_ : users_;
  index[r.key] = std::move(r);
}

void Store::set_audit_sink(AuditSink sink) {
  std::lock_guard lock(sink_mu_);
  sink_ = std::move(sink);
}

void Store::audit(audit::AuditEvent e) const {
  std::lock_guard lock(sink_mu_);
  if (sink_) sink_(std::move(e));
}

void Store::validate(const std::string& key, const json& doc) const {
  auto id_after = [&](std::string_view prefix) { return key.substr(prefix.size()); };
  try {
    if (starts_with(key, "score/")) {
      const auto s = domain::score_from_json(doc);
      if (key != score_key(s.item_id, s.student_id)) {
        throw Error(Errc::ValidationFailure, "key does not match score item/student");
      }
      auto item = data_.find(item_key(s.item_id));
      if (item == data_.end()) throw Error(Errc::ValidationFailure, "unknown item " + s.item_id);
      const auto it = domain::item_from_json(item->second.doc);
      if (doc.value("course_id", it.course_id) != it.course_id) {
        throw Error(Errc::ValidationFailure, "score course does not match item course");
      }
      domain::check_score(s, it);
    } else if (starts_with(key, "item/")) {
      const auto it = domain::item_from_json(doc);
      if (it.id != id_after("item/")) throw Error(Errc::ValidationFailure, "key does not match item id");
      domain::check_item(it);
    } else if (starts_with(key, "outcome/")) {
      const auto o = domain::outcome_from_json(doc);
      if (o.id != id_after("outcome/")) {
        throw Error(Errc::ValidationFailure, "key does not match outcome id");
      }
    } else {
      const auto u = user_from_json(doc);
      if (u.principal != id_after("user/")) {
        throw Error(Errc::ValidationFailure, "key does not match principal");
      }
    }
  } catch (const Error& e) {
    if (e.code() == Errc::ValidationFailure) throw;
    throw Error(Errc::ValidationFailure, e.detail());
  }
}

void Store::authorize_write(const std::string& key, const Credentials& credentials) const {
  PrivilegeSet privileges;
  try {
    privileges = auth_.authenticate(credentials);
  } catch (const Error& e) {
    audit({0, clock_.now_ms(), credentials.principal, audit::AuditAction::AuthFailure, key,
           {{"code", to_string(e.code())}, {"op", "put"}}});
    throw;
  }
  repository_for(key);
  if (!may_write(privileges, key)) {
    audit({0, clock_.now_ms(), credentials.principal, audit::AuditAction::AuthFailure, key,
           {{"code", "Unauthorized"}, {"op", "put"}}});
    throw Error(Errc::Unauthorized, credentials.principal + " may not write " + key);
  }
}

std::uint64_t Store::put(const std::string& key, const json& doc, const Credentials& credentials) {
  authorize_write(key, credentials);
  const Repository repo = repository_for(key);

  std::unique_lock lock(mu_);
  validate(key, doc);
  auto& index = repo == Repository::Data ? data_ : users_;
  const auto it = index.find(key);
  Record r{key, it == index.end() ? 1 : it->second.version + 1, clock_.now_ms(), doc};
  const std::string line = to_json(r).dump();
  if (out_.is_open()) {
    if (!available()) throw Error(Errc::StoreOpenFailure, path_.string() + " has been removed");
    out_ << line << '\n';
    out_.flush();
    if (!out_) throw Error(Errc::Io, "write to " + path_.string() + " failed");
  }
  log_ += line;
  log_ += '\n';
  const auto version = r.version;
  apply(std::move(r));
  // Mirrored to the monitor before the write is acknowledged.
  audit({0, clock_.now_ms(), credentials.principal, audit::AuditAction::StoreWrite, key,
         {{"version", version}, {"repository", to_string(repo)}}});
  return version;
}

std::vector<Record> Store::query(const StoreQuery& q, NodeKind caller) const {
  if (caller != NodeKind::AssA && caller != NodeKind::SAA) {
    throw Error(Errc::RouteForbidden, std::string(to_string(caller)) + " may not query the store");
  }
  std::vector<std::pair<std::string, std::map<std::string, json>>> selectors;
  for (const auto& s : q.selectors) selectors.emplace_back(normalize_prefix(s.prefix), s.filter);

  std::shared_lock lock(mu_);
  std::map<std::string, Record> hits;
  for (const auto& [prefix, filter] : selectors) {
    const auto& index = prefix == "user/" ? users_ : data_;
    for (auto it = index.lower_bound(prefix); it != index.end() && starts_with(it->first, prefix);
         ++it) {
      bool ok = true;
      for (const auto& [field, value] : filter) {
        auto f = it->second.doc.find(field);
        if (f == it->second.doc.end() || *f != value) {
          ok = false;
          break;
        }
      }
      if (ok) hits.emplace(it->first, it->second);
    }
  }
  std::vector<Record> out;
  out.reserve(hits.size());
  for (auto& [_, r] : hits) out.push_back(std::move(r));
  return out;
}

std::optional<Record> Store::get(const std::string& key) const {
  const auto& index = repository_for(key) == Repository::Data ? data_ : users_;
  std::shared_lock lock(mu_);
  auto it = index.find(key);
  if (it == index.end()) return std::nullopt;
  return it->second;
}

std::vector<Record> Store::records(Repository repo) const {
  std::shared_lock lock(mu_);
  const auto& index = repo == Repository::Data ? data_ : users_;
  std::vector<Record> out;
  for (const auto& [_, r] : index) out.push_back(r);
  return out;
}

std::size_t Store::size() const {
  std::shared_lock lock(mu_);
  return data_.size() + users_.size();
}

void Store::snapshot(const fs::path& dest) const {
  std::shared_lock lock(mu_);
  write_file(dest, log_);
  write_file(fs::path(dest.string() + ".sha256"), crypto::to_hex(crypto::sha256(log_)) + "\n");
}

void Store::restore(const fs::path& src) {
  const std::string bytes = read_file(src);
  std::string digest = read_file(fs::path(src.string() + ".sha256"));
  while (!digest.empty() && (digest.back() == '\n' || digest.back() == '\r')) digest.pop_back();
  if (!crypto::equal_ct(crypto::to_hex(crypto::sha256(bytes)), digest)) {
    throw Error(Errc::DigestMismatch, src.string() + " does not match its digest");
  }
  std::unique_lock lock(mu_);
  load_bytes(bytes);
  if (!path_.empty()) {
    out_.close();
    write_file(path_, log_);
    out_.open(path_, std::ios::app | std::ios::binary);
  }
}

bool Store::available() const { return path_.empty() || fs::exists(path_); }

PrincipalDirectory Store::directory() const {
  return [this](const std::string& principal) -> std::optional<PrincipalRecord> {
    auto r = get(user_key(principal));
    if (!r) return std::nullopt;
    try {
      auto u = user_from_json(r->doc);
      return PrincipalRecord{u.principal, u.roles, u.enabled};
    } catch (const Error&) {
      return std::nullopt;
    }
  };
}

}  // namespace imobe::store
