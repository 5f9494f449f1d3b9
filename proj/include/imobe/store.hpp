#pragma once

// The OBE database server: an append-only NDJSON log of {key, version, ts,
// doc} records with an in-memory index of the latest version per key.
//
// Keys are type-prefixed: score/<item>/<student>, item/<id>, outcome/<id>
// live in the Data repository; user/<principal> lives in UserProfiles.
// Writes go through one committer and each successful write hands exactly
// one StoreWrite audit event to the sink before put() returns.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "imobe/audit.hpp"
#include "imobe/auth.hpp"
#include "imobe/clock.hpp"
#include "imobe/domain.hpp"
#include "imobe/kinds.hpp"
#include "json.hpp"

namespace imobe::store {

enum class Repository { Data, UserProfiles };

std::string_view to_string(Repository r);

// Throws Error(InvalidKeyPrefix).
Repository repository_for(std::string_view key);

inline constexpr std::string_view kPrefixes[] = {"score/", "item/", "outcome/", "user/"};

std::string score_key(std::string_view item_id, std::string_view student_id);
std::string item_key(std::string_view item_id);
std::string outcome_key(std::string_view outcome_id);
std::string user_key(std::string_view principal);

struct Record {
  std::string key;
  std::uint64_t version = 0;
  TimestampMs ts = 0;
  nlohmann::json doc;

  bool operator==(const Record&) const = default;
};

nlohmann::json to_json(const Record& r);

struct Selector {
  std::string prefix;  // "score", "score/", ...
  // Exact-match conjunction over top-level document fields.
  std::map<std::string, nlohmann::json> filter;
};

struct StoreQuery {
  std::string correlation_id;
  std::vector<Selector> selectors;
};

nlohmann::json to_json(const StoreQuery& q);
StoreQuery store_query_from_json(const nlohmann::json& j);

// Account documents. The secret is stored as a salted PBKDF2 hash.
struct UserProfile {
  std::string principal;
  std::set<Role> roles;
  bool enabled = true;
  std::string salt;
  std::string secret_hash;
  nlohmann::json last_request;  // null until the first request
};

UserProfile make_user(const std::string& principal, const std::string& secret,
                      std::set<Role> roles, bool enabled = true);
bool secret_matches(const UserProfile& user, const std::string& secret);
nlohmann::json to_json(const UserProfile& u);
UserProfile user_from_json(const nlohmann::json& j);

using AuditSink = std::function<void(audit::AuditEvent)>;

class Store {
 public:
  // In-memory when `log_path` is empty. Otherwise the log is replayed on
  // open; throws Error(StoreOpenFailure) if it cannot be opened or parsed.
  Store(std::filesystem::path log_path, const Authenticator& auth, const Clock& clock);

  void set_audit_sink(AuditSink sink);

  // The write gate alone: authenticates and checks the role for `key`'s
  // prefix, auditing a refusal as AuthFailure.
  void authorize_write(const std::string& key, const Credentials& credentials) const;

  // Throws Error(Unauthorized | InvalidKeyPrefix | ValidationFailure) and the
  // authentication errors. Returns the new version of `key`.
  std::uint64_t put(const std::string& key, const nlohmann::json& doc,
                    const Credentials& credentials);

  // Latest versions of every record matching any selector, ordered by key.
  // Throws Error(RouteForbidden) unless the caller is AssA or SAA.
  std::vector<Record> query(const StoreQuery& q, NodeKind caller) const;

  std::optional<Record> get(const std::string& key) const;
  std::vector<Record> records(Repository repo) const;
  std::size_t size() const;

  // Writes the log to `dest` and its SHA-256 hex to `dest`.sha256.
  void snapshot(const std::filesystem::path& dest) const;
  // Replaces the contents with a verified snapshot. Throws
  // Error(DigestMismatch) if the digest file does not match.
  void restore(const std::filesystem::path& src);

  // False once the backing file has disappeared.
  bool available() const;
  const std::filesystem::path& path() const { return path_; }
  const Clock& clock() const { return clock_; }

  // Resolves principals from the user/ records.
  PrincipalDirectory directory() const;

 private:
  void validate(const std::string& key, const nlohmann::json& doc) const;
  void apply(Record r);
  void load_bytes(const std::string& bytes);
  void audit(audit::AuditEvent e) const;

  std::filesystem::path path_;
  const Authenticator& auth_;
  const Clock& clock_;

  mutable std::shared_mutex mu_;
  std::map<std::string, Record> data_;
  std::map<std::string, Record> users_;
  std::string log_;
  std::ofstream out_;

  mutable std::mutex sink_mu_;
  AuditSink sink_;
};

}  // namespace imobe::store
