#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "imobe/clock.hpp"
#include "imobe/kinds.hpp"
#include "json.hpp"

namespace imobe {

enum class Role { Academician, Student, Administrator, System };

std::string_view to_string(Role role);
Role role_from_string(std::string_view name);

inline constexpr std::string_view kSystemPrincipal = "system";

struct Credentials {
  std::string principal;
  std::string token;
  TimestampMs issued_at = 0;

  bool operator==(const Credentials&) const = default;
};

nlohmann::json to_json(const Credentials& c);
Credentials credentials_from_json(const nlohmann::json& j);
// Rebuilds the credential triple from a bearer token string. Throws
// Error(InvalidCredentials) if the token is not well formed.
Credentials credentials_from_token(std::string_view token);

struct PrivilegeSet {
  std::set<Role> roles;
  std::set<NodeKind> reachable_kinds;

  bool has(Role r) const { return roles.count(r) != 0; }
  bool operator==(const PrivilegeSet&) const = default;
};

PrivilegeSet privileges_for(const std::set<Role>& roles);

struct PrincipalRecord {
  std::string principal;
  std::set<Role> roles;
  bool enabled = true;
};

using PrincipalDirectory =
    std::function<std::optional<PrincipalRecord>(const std::string& principal)>;

// Issues and verifies shared-secret signed tokens of the form
// principal:issued_at:nonce:hmac. The built-in "system" principal always
// resolves to {System}; every other principal is looked up in the
// directory.
class Authenticator {
 public:
  Authenticator(std::string secret, std::int64_t ttl_s, const Clock& clock);

  void set_directory(PrincipalDirectory directory);

  Credentials issue(const std::string& principal);
  Credentials issue_at(const std::string& principal, TimestampMs issued_at);

  // Throws Error(InvalidCredentials | ExpiredCredentials | UnknownPrincipal).
  PrivilegeSet authenticate(const Credentials& credentials) const;

  std::int64_t ttl_s() const { return ttl_s_; }
  const Clock& clock() const { return clock_; }

 private:
  std::string sign(std::string_view body) const;

  std::string secret_;
  std::int64_t ttl_s_;
  const Clock& clock_;
  PrincipalDirectory directory_;
  std::atomic<std::uint64_t> nonce_{0};
};

}  // namespace imobe
