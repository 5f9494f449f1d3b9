#include "imobe/auth.hpp"

#include "doctest.h"
#include "imobe/error.hpp"

using namespace imobe;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an imobe::Error");
  return Errc::Usage;
}

}  // namespace

TEST_CASE("token issue and authenticate") {
  ManualClock clock;
  Authenticator auth("s3cret", 3600, clock);
  std::map<std::string, PrincipalRecord> users{
      {"lee", {"lee", {Role::Academician}, true}},
      {"root", {"root", {Role::Administrator}, true}},
      {"gone", {"gone", {Role::Student}, false}}};
  auth.set_directory([&](const std::string& p) -> std::optional<PrincipalRecord> {
    auto it = users.find(p);
    if (it == users.end()) return std::nullopt;
    return it->second;
  });

  auto creds = auth.issue("lee");
  auto priv = auth.authenticate(creds);
  CHECK(priv.roles == std::set<Role>{Role::Academician});
  CHECK(priv.reachable_kinds == std::set<NodeKind>{NodeKind::UIA});
  CHECK(auth.authenticate(creds) == priv);

  CHECK(auth.authenticate(auth.issue("root")).reachable_kinds.count(NodeKind::SAA) == 1);
  CHECK(auth.authenticate(auth.issue("system")).has(Role::System));

  SUBCASE("every single flipped byte is rejected") {
    for (std::size_t i = 0; i < creds.token.size(); ++i) {
      auto forged = creds;
      forged.token[i] ^= 0x01;
      CHECK(code_of([&] { auth.authenticate(forged); }) == Errc::InvalidCredentials);
    }
  }
  SUBCASE("expiry") {
    clock.advance(3600 * 1000);
    CHECK_NOTHROW(auth.authenticate(creds));
    clock.advance(1000);
    CHECK(code_of([&] { auth.authenticate(creds); }) == Errc::ExpiredCredentials);
  }
  SUBCASE("principal mismatch, unknown and disabled") {
    auto swapped = creds;
    swapped.principal = "root";
    CHECK(code_of([&] { auth.authenticate(swapped); }) == Errc::InvalidCredentials);
    CHECK(code_of([&] { auth.authenticate(auth.issue("nobody")); }) == Errc::UnknownPrincipal);
    CHECK(code_of([&] { auth.authenticate(auth.issue("gone")); }) == Errc::InvalidCredentials);
  }
  SUBCASE("another deployment's secret does not verify") {
    Authenticator other("different", 3600, clock);
    CHECK(code_of([&] { auth.authenticate(other.issue("lee")); }) == Errc::InvalidCredentials);
  }
  SUBCASE("bearer token parsing") {
    CHECK(credentials_from_token(creds.token) == creds);
    CHECK(code_of([] { credentials_from_token("garbage"); }) == Errc::InvalidCredentials);
  }
}

TEST_CASE("privilege sets keep clients away from private endpoints") {
  for (auto r : {Role::Academician, Role::Student}) {
    auto p = privileges_for({r});
    CHECK(p.reachable_kinds.count(NodeKind::AssA) == 0);
    CHECK(p.reachable_kinds.count(NodeKind::Store) == 0);
  }
}
