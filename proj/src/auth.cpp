#include "imobe/auth.hpp"

#include <charconv>

#include "imobe/crypto.hpp"
#include "imobe/error.hpp"
#include "imobe/json_util.hpp"

namespace imobe {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::Academician: return "Academician";
    case Role::Student: return "Student";
    case Role::Administrator: return "Administrator";
    case Role::System: return "System";
  }
  return "?";
}

Role role_from_string(std::string_view name) {
  for (auto r : {Role::Academician, Role::Student, Role::Administrator, Role::System}) {
    if (to_string(r) == name) return r;
  }
  throw Error(Errc::Malformed, "unknown role '" + std::string(name) + "'");
}

nlohmann::json to_json(const Credentials& c) {
  return {{"principal", c.principal}, {"token", c.token}, {"issued_at", c.issued_at}};
}

Credentials credentials_from_json(const nlohmann::json& j) {
  return {jsonutil::get_string(j, "principal", Errc::MissingField),
          jsonutil::get_string(j, "token", Errc::MissingField),
          jsonutil::get_int(j, "issued_at", Errc::MissingField)};
}

namespace {

struct TokenParts {
  std::string_view principal, issued_at, nonce, signature;
};

// Splits from the right so principals may contain ':'.
std::optional<TokenParts> split_token(std::string_view token) {
  TokenParts parts;
  std::string_view* fields[] = {&parts.signature, &parts.nonce, &parts.issued_at};
  std::string_view rest = token;
  for (auto* f : fields) {
    auto pos = rest.rfind(':');
    if (pos == std::string_view::npos) return std::nullopt;
    *f = rest.substr(pos + 1);
    rest = rest.substr(0, pos);
  }
  parts.principal = rest;
  if (parts.principal.empty() || parts.signature.empty()) return std::nullopt;
  return parts;
}

std::optional<TimestampMs> parse_ms(std::string_view s) {
  TimestampMs v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace

Credentials credentials_from_token(std::string_view token) {
  auto parts = split_token(token);
  if (!parts) throw Error(Errc::InvalidCredentials, "malformed token");
  auto issued = parse_ms(parts->issued_at);
  if (!issued) throw Error(Errc::InvalidCredentials, "malformed token timestamp");
  return {std::string(parts->principal), std::string(token), *issued};
}

PrivilegeSet privileges_for(const std::set<Role>& roles) {
  PrivilegeSet p{roles, {}};
  for (Role r : roles) {
    switch (r) {
      case Role::Academician:
      case Role::Student:
        p.reachable_kinds.insert(NodeKind::UIA);
        break;
      case Role::Administrator:
        p.reachable_kinds.insert({NodeKind::UIA, NodeKind::SAA});
        break;
      case Role::System:
        for (auto k : kAllNodeKinds) {
          if (k != NodeKind::Client) p.reachable_kinds.insert(k);
        }
        break;
    }
  }
  return p;
}

Authenticator::Authenticator(std::string secret, std::int64_t ttl_s, const Clock& clock)
    : secret_(std::move(secret)), ttl_s_(ttl_s), clock_(clock) {
  if (secret_.empty()) throw Error(Errc::Usage, "token secret must not be empty");
  if (ttl_s_ <= 0) throw Error(Errc::Usage, "token ttl must be positive");
}

void Authenticator::set_directory(PrincipalDirectory directory) {
  directory_ = std::move(directory);
}

std::string Authenticator::sign(std::string_view body) const {
  return crypto::to_hex(crypto::hmac_sha256(secret_, body));
}

Credentials Authenticator::issue(const std::string& principal) {
  return issue_at(principal, clock_.now_ms());
}

Credentials Authenticator::issue_at(const std::string& principal, TimestampMs issued_at) {
  if (principal.empty()) throw Error(Errc::UnknownPrincipal, "empty principal");
  const std::string body =
      principal + ":" + std::to_string(issued_at) + ":" + std::to_string(++nonce_);
  return {principal, body + ":" + sign(body), issued_at};
}

PrivilegeSet Authenticator::authenticate(const Credentials& c) const {
  auto parts = split_token(c.token);
  if (!parts) throw Error(Errc::InvalidCredentials, "malformed token");
  const std::string_view body(c.token.data(), parts->signature.data() - c.token.data() - 1);
  if (!crypto::equal_ct(sign(body), parts->signature)) {
    throw Error(Errc::InvalidCredentials, "bad token signature");
  }
  auto issued = parse_ms(parts->issued_at);
  if (parts->principal != c.principal || !issued || *issued != c.issued_at) {
    throw Error(Errc::InvalidCredentials, "token does not match credential fields");
  }
  if (clock_.now_ms() - c.issued_at > ttl_s_ * 1000) {
    throw Error(Errc::ExpiredCredentials, "token older than " + std::to_string(ttl_s_) + " s");
  }
  if (c.principal == kSystemPrincipal) return privileges_for({Role::System});
  auto record = directory_ ? directory_(c.principal) : std::nullopt;
  if (!record) throw Error(Errc::UnknownPrincipal, "unknown principal " + c.principal);
  if (!record->enabled) throw Error(Errc::InvalidCredentials, "account disabled");
  return privileges_for(record->roles);
}

}  // namespace imobe
