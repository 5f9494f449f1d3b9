#include "imobe/store.hpp"

#include <atomic>
#include <filesystem>
#include <random>
#include <thread>

#include "doctest.h"
#include "imobe/error.hpp"

using namespace imobe;
using namespace imobe::store;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Env {
  ManualClock clock;
  Authenticator auth{"store-secret", 3600, clock};
  std::map<std::string, PrincipalRecord> users{{"alice", {"alice", {Role::Academician}, true}},
                                               {"sam", {"sam", {Role::Student}, true}},
                                               {"root", {"root", {Role::Administrator}, true}}};
  std::mutex mu;
  std::vector<audit::AuditEvent> events;

  Env() {
    auth.set_directory([this](const std::string& p) -> std::optional<PrincipalRecord> {
      auto it = users.find(p);
      return it == users.end() ? std::nullopt : std::optional(it->second);
    });
  }

  void attach(Store& s) {
    s.set_audit_sink([this](audit::AuditEvent e) {
      std::lock_guard lock(mu);
      events.push_back(std::move(e));
    });
  }

  std::size_t count(audit::AuditAction a) {
    std::lock_guard lock(mu);
    std::size_t n = 0;
    for (const auto& e : events) n += e.action == a;
    return n;
  }
};

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "imobe-store-test";
  fs::create_directories(dir);
  auto p = dir / name;
  fs::remove(p);
  fs::remove(p.string() + ".sha256");
  return p;
}

json item_doc(const std::string& id, const std::string& course, double max_marks) {
  domain::AssessmentItem it{id, course, domain::AssessmentKind::Test, max_marks, {{"CO1", 1.0}}};
  return domain::to_json(it);
}

json score_doc(const std::string& item, const std::string& student, double raw,
               const std::string& course) {
  return domain::to_json(domain::Score{student, item, raw}, course);
}

Errc error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::Usage;
}

StoreQuery scores_of(const std::string& course) {
  return {"c-1", {{"score", {{"course_id", course}}}}};
}

}  // namespace

TEST_CASE("put versions, gates and audits") {
  Env env;
  Store s({}, env.auth, env.clock);
  env.attach(s);
  auto alice = env.auth.issue("alice");

  CHECK(s.put("item/I1", item_doc("I1", "C", 10), alice) == 1);
  CHECK(s.put("score/I1/A", score_doc("I1", "A", 8, "C"), alice) == 1);
  CHECK(s.put("score/I1/A", score_doc("I1", "A", 9, "C"), alice) == 2);
  CHECK(env.count(audit::AuditAction::StoreWrite) == 3);
  CHECK(s.get("score/I1/A")->doc["raw"] == 9);

  CHECK(error_of([&] { s.put("score/I1/B", score_doc("I1", "B", 1, "C"), env.auth.issue("sam")); }) ==
        Errc::Unauthorized);
  CHECK(env.count(audit::AuditAction::StoreWrite) == 3);
  CHECK(env.count(audit::AuditAction::AuthFailure) == 1);

  auto forged = alice;
  forged.token[3] ^= 1;
  CHECK(error_of([&] { s.put("item/I2", item_doc("I2", "C", 5), forged); }) == Errc::InvalidCredentials);
  CHECK(env.count(audit::AuditAction::AuthFailure) == 2);

  SUBCASE("type invariants") {
    CHECK(error_of([&] { s.put("score/I1/B", score_doc("I1", "B", 11, "C"), alice); }) ==
          Errc::ValidationFailure);
    CHECK(error_of([&] { s.put("score/I9/B", score_doc("I9", "B", 1, "C"), alice); }) ==
          Errc::ValidationFailure);
    CHECK(error_of([&] { s.put("score/I1/Z", score_doc("I1", "B", 1, "C"), alice); }) ==
          Errc::ValidationFailure);
    CHECK(error_of([&] { s.put("item/I0", item_doc("I0", "C", 0), alice); }) == Errc::ValidationFailure);
    CHECK(error_of([&] { s.put("item/I3", json{{"id", "I3"}}, alice); }) == Errc::ValidationFailure);
    CHECK(error_of([&] { s.put("grades/x", json::object(), alice); }) == Errc::InvalidKeyPrefix);
    CHECK(env.count(audit::AuditAction::StoreWrite) == 3);
  }
  SUBCASE("keyspaces are split by role and repository") {
    auto root = env.auth.issue("root");
    auto doc = to_json(make_user("bob", "pw", {Role::Student}));
    CHECK(error_of([&] { s.put("user/bob", doc, alice); }) == Errc::Unauthorized);
    CHECK(s.put("user/bob", doc, root) == 1);
    CHECK(error_of([&] { s.put("item/I5", item_doc("I5", "C", 5), root); }) == Errc::Unauthorized);
    CHECK(s.records(Repository::UserProfiles).size() == 1);
    for (const auto& r : s.records(Repository::Data)) CHECK(r.key.rfind("user/", 0) != 0);
    CHECK(s.directory()("bob")->roles == std::set<Role>{Role::Student});
    CHECK_FALSE(s.directory()("nobody"));
  }
}

TEST_CASE("query") {
  Env env;
  Store s({}, env.auth, env.clock);
  auto alice = env.auth.issue("alice");

  CHECK(s.query(scores_of("C"), NodeKind::AssA).empty());

  s.put("item/I1", item_doc("I1", "C", 10), alice);
  s.put("item/J1", item_doc("J1", "D", 10), alice);
  for (std::string st : {"C3", "A1", "B2"}) s.put("score/I1/" + st, score_doc("I1", st, 5, "C"), alice);
  s.put("score/J1/A1", score_doc("J1", "A1", 5, "D"), alice);

  auto hits = s.query(scores_of("C"), NodeKind::AssA);
  std::vector<std::string> keys;
  for (const auto& r : hits) keys.push_back(r.key);
  CHECK(keys == std::vector<std::string>{"score/I1/A1", "score/I1/B2", "score/I1/C3"});

  CHECK(error_of([&] { s.query(scores_of("C"), NodeKind::Client); }) == Errc::RouteForbidden);
  CHECK(error_of([&] { s.query(scores_of("C"), NodeKind::AA); }) == Errc::RouteForbidden);
  CHECK(error_of([&] { s.query({"c", {{"secrets", {}}}}, NodeKind::AssA); }) == Errc::InvalidKeyPrefix);

  // Read-your-writes.
  s.put("score/I1/D4", score_doc("I1", "D4", 1, "C"), alice);
  CHECK(s.query(scores_of("C"), NodeKind::SAA).size() == 4);

  auto q = store_query_from_json(to_json(scores_of("C")));
  CHECK(q.selectors.at(0).filter.at("course_id") == "C");
}

TEST_CASE("query agrees with a linear scan") {
  Env env;
  Store s({}, env.auth, env.clock);
  auto alice = env.auth.issue("alice");
  std::mt19937_64 rng(5);
  std::vector<std::pair<std::string, json>> latest;  // key -> doc, unordered
  for (std::string c : {"C", "D", "E"}) {
    for (int i = 0; i < 3; ++i) {
      std::string id = c + std::to_string(i);
      s.put(item_key(id), item_doc(id, c, 10), alice);
    }
  }
  std::map<std::string, json> truth;
  for (int n = 0; n < 300; ++n) {
    std::string c = std::string(1, "CDE"[rng() % 3]);
    std::string item = c + std::to_string(rng() % 3);
    std::string st = "s" + std::to_string(rng() % 7);
    auto doc = score_doc(item, st, static_cast<double>(rng() % 11), c);
    s.put(score_key(item, st), doc, alice);
    truth[score_key(item, st)] = doc;
  }
  for (std::string c : {"C", "D", "E", "Z"}) {
    std::vector<json> expect;
    for (const auto& [k, d] : truth) {
      if (d["course_id"] == c) expect.push_back(d);
    }
    std::vector<json> got;
    for (const auto& r : s.query(scores_of(c), NodeKind::AssA)) got.push_back(r.doc);
    CHECK(got == expect);
  }
}

TEST_CASE("log replay and snapshots") {
  Env env;
  auto alice = env.auth.issue("alice");
  auto path = temp_path("store.ndjson");
  std::vector<Record> before;
  {
    Store s(path, env.auth, env.clock);
    s.put("item/I1", item_doc("I1", "C", 10), alice);
    s.put("score/I1/A", score_doc("I1", "A", 3, "C"), alice);
    s.put("score/I1/A", score_doc("I1", "A", 4, "C"), alice);
    before = s.query(scores_of("C"), NodeKind::AssA);
  }
  Store reopened(path, env.auth, env.clock);
  CHECK(reopened.query(scores_of("C"), NodeKind::AssA) == before);
  CHECK(reopened.put("score/I1/A", score_doc("I1", "A", 5, "C"), alice) == 3);

  auto snap = temp_path("snap.ndjson");
  reopened.snapshot(snap);
  const auto all = reopened.records(Repository::Data);

  Store fresh(temp_path("fresh.ndjson"), env.auth, env.clock);
  fresh.restore(snap);
  CHECK(fresh.records(Repository::Data) == all);
  CHECK(fresh.query(scores_of("C"), NodeKind::AssA) == reopened.query(scores_of("C"), NodeKind::AssA));

  SUBCASE("corrupted snapshot") {
    std::string bytes;
    {
      std::ifstream in(snap, std::ios::binary);
      bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    bytes[bytes.size() / 2] ^= 1;
    std::ofstream(snap, std::ios::binary | std::ios::trunc) << bytes;
    CHECK(error_of([&] { fresh.restore(snap); }) == Errc::DigestMismatch);
    CHECK(fresh.records(Repository::Data) == all);
  }
  SUBCASE("empty store") {
    Store empty({}, env.auth, env.clock);
    auto p = temp_path("empty.ndjson");
    empty.snapshot(p);
    Store other({}, env.auth, env.clock);
    other.restore(p);
    CHECK(other.query(scores_of("C"), NodeKind::AssA).empty());
  }
  SUBCASE("removed backing file") {
    fs::remove(path);
    CHECK_FALSE(reopened.available());
    CHECK(error_of([&] { reopened.put("item/I2", item_doc("I2", "C", 1), alice); }) ==
          Errc::StoreOpenFailure);
  }
  SUBCASE("unreadable log") {
    auto bad = temp_path("bad.ndjson");
    std::ofstream(bad) << "{not json\n";
    CHECK(error_of([&] { Store s(bad, env.auth, env.clock); }) == Errc::StoreOpenFailure);
  }
}

TEST_CASE("concurrent writers: audit exactness and per-key monotonicity") {
  Env env;
  Store s({}, env.auth, env.clock);
  env.attach(s);
  auto alice = env.auth.issue("alice");
  s.put("item/I1", item_doc("I1", "C", 1000), alice);
  const auto base = env.count(audit::AuditAction::StoreWrite);

  std::atomic<int> ok{0};
  std::atomic<bool> monotone{true};
  std::vector<std::thread> writers;
  for (int w = 0; w < 8; ++w) {
    writers.emplace_back([&, w] {
      std::map<std::string, std::uint64_t> last;
      for (int i = 0; i < 250; ++i) {
        const std::string key = score_key("I1", "s" + std::to_string((w + i) % 10));
        auto v = s.put(key, score_doc("I1", "s" + std::to_string((w + i) % 10), i, "C"), alice);
        if (v <= last[key]) monotone = false;
        last[key] = v;
        ++ok;
      }
    });
  }
  for (auto& t : writers) t.join();
  CHECK(ok == 2000);
  CHECK(monotone);
  CHECK(env.count(audit::AuditAction::StoreWrite) - base == 2000);
  std::uint64_t total = 0;
  for (const auto& r : s.query(scores_of("C"), NodeKind::AssA)) total += r.version;
  CHECK(total == 2000);
}

TEST_CASE("account secrets") {
  auto u = make_user("bob", "hunter2", {Role::Student});
  CHECK(secret_matches(u, "hunter2"));
  CHECK_FALSE(secret_matches(u, "hunter3"));
  CHECK(user_from_json(to_json(u)).secret_hash == u.secret_hash);
  CHECK(make_user("bob", "hunter2", {Role::Student}).salt != u.salt);
}
