// Acceptance suite: one PASS/FAIL line per criterion. Tolerances and sizes
// are pinned here; the process exits non-zero if any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <thread>
#include <tuple>

#include "deployment.hpp"
#include "generators.hpp"
#include "imobe/error.hpp"
#include "imobe/scenario.hpp"
#include "oracle.hpp"

using namespace imobe;
using nlohmann::json;
using protocol::MessageKind;
using Clock_ = std::chrono::steady_clock;

namespace {

constexpr double kOracleTolerance = 1e-9;
constexpr double kScaleTolerance = 1e-12;
constexpr int kOracleInstances = 200;
constexpr int kInvariantInstances = 1000;
constexpr int kFuzzedDeliveries = 10'000;
constexpr int kCheckpointRuns = 100;
constexpr int kWriters = 8;
constexpr int kPutsPerWriter = 250;
constexpr double kTraceBudgetS = 5.0;
constexpr double kOracleBudgetS = 60.0;

struct Verdict {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail = why;  // keep the first failure
    pass = false;
  }
};

double seconds_since(Clock_::time_point t0) {
  return std::chrono::duration<double>(Clock_::now() - t0).count();
}

Config quiet_config() {
  Config c;
  c.token_secret = "acceptance-secret";
  c.workers = 4;
  return c;
}

// ---------------------------------------------------------------------------

Verdict trace_conformance() {
  Verdict v;
  const auto t0 = Clock_::now();
  const std::string fx = IMOBE_FIXTURE_DIR;
  const std::string cmd = std::string(IMOBE_CLI) + " simulate-scenario --fixture " + fx +
                          "/demo.json --scores " + fx + "/demo_scores.csv 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) {
    v.fail("cannot run " + cmd);
    return v;
  }
  std::string output;
  char buf[512];
  while (fgets(buf, sizeof buf, pipe)) output += buf;
  const int status = pclose(pipe);
  const double elapsed = seconds_since(t0);

  std::vector<std::string> steps;
  std::istringstream lines(output);
  for (std::string line; std::getline(lines, line);) {
    const auto dot = line.find(". ");
    const auto tail = line.find("  msg_id=");
    if (dot == std::string::npos || tail == std::string::npos) continue;
    steps.push_back(line.substr(dot + 2, tail - dot - 2));
  }
  // The eight interactions of the academician's request, in order.
  const std::vector<std::string> expected{
      "client -> UIA ASSESS_REQUEST",        "UIA -> AA JOB_DELEGATE",
      "AA -> AssA DATA_RETRIEVE_REQUEST",    "AssA -> store STORE_QUERY",
      "store -> AssA STORE_RESULT",          "AssA -> AA ASSESS_RESULT",
      "AA -> UIA JOB_RESULT",                "UIA -> client PRESENT"};
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) v.fail("exit status " + std::to_string(status));
  if (steps != expected) v.fail(std::to_string(steps.size()) + " steps, not the canonical 8:\n" + output);
  if (elapsed >= kTraceBudgetS) v.fail("took " + std::to_string(elapsed) + " s");
  if (v.pass) v.detail = "8/8 steps, exit 0, " + std::to_string(elapsed) + " s";
  return v;
}

// ---------------------------------------------------------------------------

json fixture_of(const gen::Instance& in) {
  json f{{"outcomes", json::array()}, {"items", json::array()}, {"scores", json::array()}};
  for (const auto& n : in.hierarchy) f["outcomes"].push_back(domain::to_json(n));
  for (const auto& i : in.items) f["items"].push_back(domain::to_json(i));
  for (const auto& s : in.scores) f["scores"].push_back(domain::to_json(s, in.course));
  f["users"] = json::array({{{"principal", "prof"}, {"secret", "prof-pw"}, {"roles", {"Academician"}}}});
  return f;
}

Verdict attainment_oracle() {
  Verdict v;
  std::mt19937_64 rng(20240601);
  const auto t0 = Clock_::now();
  double worst = 0;
  for (int n = 0; n < kOracleInstances && v.pass; ++n) {
    const auto in = gen::random_instance(rng, 5, 4, 3);
    deployment::Deployment d(runtime::Mode::Deterministic, false, quiet_config());
    fixture::seed(d.platform.store(), fixture_of(in), d.platform.system_credentials());
    auto [token, _] = d.login("prof", "prof-pw");
    auto r = d.post("/api/v1/assess",
                    {{"course_id", in.course}, {"scope", {{"type", "CourseReport"}}}, {"threshold", in.threshold}},
                    token);
    if (r.status != 200) {
      v.fail("instance " + std::to_string(n) + ": HTTP " + std::to_string(r.status) + " " + r.body);
      break;
    }
    const auto got = json::parse(r.body)["result"];
    const auto want = oracle::recompute(in.course, in.rows(), in.oracle_items(),
                                        in.ids_at(domain::OutcomeLevel::Exit),
                                        in.ids_at(domain::OutcomeLevel::Program), in.edges(), in.threshold);
    auto close = [&](const std::string& what, const json& g, double w) {
      const double diff = g.is_number() ? std::abs(g.get<double>() - w) : INFINITY;
      worst = std::max(worst, diff);
      if (!(diff <= kOracleTolerance)) {
        v.fail("instance " + std::to_string(n) + " " + what + ": got " + g.dump() + ", oracle " +
               std::to_string(w));
      }
    };
    auto same_keys = [&](const std::string& what, const json& g, std::size_t want_size) {
      if (g.size() != want_size) v.fail("instance " + std::to_string(n) + " " + what + ": key sets differ");
    };
    same_keys("per_student", got["per_student"], want.per_student.size());
    for (const auto& [s, cos] : want.per_student) {
      same_keys("per_student." + s, got["per_student"][s], cos.size());
      for (const auto& [co, x] : cos) close("per_student." + s + "." + co, got["per_student"][s][co], x);
    }
    same_keys("cohort", got["cohort"], want.mean.size());
    for (const auto& [co, x] : want.mean) close("cohort." + co + ".mean", got["cohort"][co]["mean"], x);
    for (const auto& [co, x] : want.fraction) {
      close("cohort." + co + ".fraction_above_threshold", got["cohort"][co]["fraction_above_threshold"], x);
    }
    same_keys("po_rollup", got["po_rollup"], want.po.size());
    for (const auto& [po, x] : want.po) close("po_rollup." + po, got["po_rollup"][po], x);
  }
  const double elapsed = seconds_since(t0);
  if (elapsed >= kOracleBudgetS) v.fail("took " + std::to_string(elapsed) + " s");
  if (v.pass) {
    std::ostringstream ss;
    ss << kOracleInstances << " instances through the agents, max |diff| " << worst << ", " << elapsed << " s";
    v.detail = ss.str();
  }
  return v;
}

// ---------------------------------------------------------------------------

// Does nothing; routing is decided before any behavior runs.
class Inert final : public runtime::Behavior {
 public:
  void handle(runtime::AgentContext&, const protocol::MessageEnvelope&) const override {}
};

using Triple = std::tuple<NodeKind, NodeKind, MessageKind>;

// Endpoint pairs and the message kinds they may carry. Client, UIA, AA, SA,
// AssA, store and SAA as in the deployment's routing rules, plus the return
// legs the request flow needs (AA/SA -> UIA, UIA -> client) and the SA's
// retrieval relayed by the UIA.
std::set<Triple> expected_routes() {
  using N = NodeKind;
  using K = MessageKind;
  std::set<Triple> t;
  auto add = [&](N from, N to, std::initializer_list<K> kinds) {
    for (auto k : kinds) t.insert({from, to, k});
  };
  add(N::Client, N::UIA, {K::LOGIN, K::ASSESS_REQUEST});
  add(N::UIA, N::AA, {K::JOB_DELEGATE});
  add(N::UIA, N::SA, {K::JOB_DELEGATE});
  add(N::UIA, N::SAA, {K::AUDIT_EVENT});
  add(N::UIA, N::AssA, {K::DATA_RETRIEVE_REQUEST});
  add(N::UIA, N::Client, {K::PRESENT, K::ERROR});
  add(N::AA, N::AssA, {K::DATA_RETRIEVE_REQUEST});
  add(N::AA, N::UIA, {K::JOB_RESULT});
  add(N::SA, N::UIA, {K::DATA_RETRIEVE_REQUEST, K::JOB_RESULT});
  add(N::AssA, N::Store, {K::STORE_QUERY});
  add(N::AssA, N::AA, {K::ASSESS_RESULT});
  add(N::AssA, N::SA, {K::ASSESS_RESULT});
  add(N::Store, N::AssA, {K::STORE_RESULT});
  add(N::Store, N::SAA, {K::AUDIT_EVENT, K::STORE_RESULT});
  add(N::SAA, N::Store, {K::STORE_QUERY});
  return t;
}

Verdict routing_soundness() {
  Verdict v;
  ManualClock clock;
  std::map<std::string, PrincipalRecord> users{{"ada", {"ada", {Role::Academician}, true}},
                                               {"stu", {"stu", {Role::Student}, true}}};
  Authenticator auth("routing-secret", 3600, clock);
  auth.set_directory([&](const std::string& p) -> std::optional<PrincipalRecord> {
    auto it = users.find(p);
    return it == users.end() ? std::nullopt : std::optional(it->second);
  });
  ManualClock past;
  past.set(clock.now_ms() - 2 * 3600 * 1000);
  Authenticator old_auth("routing-secret", 3600, past);
  Authenticator rogue("not-the-secret", 3600, clock);

  auto inert = std::make_shared<Inert>();
  runtime::RuntimeOptions o;
  o.mode = runtime::Mode::Deterministic;
  runtime::Runtime rt(auth, clock, [inert](NodeKind) { return inert; }, o);
  const auto sys = auth.issue(std::string(kSystemPrincipal));

  std::map<NodeKind, std::string> endpoint;
  std::map<std::string, NodeKind> kind_of;
  for (auto k : kAllNodeKinds) {
    if (k == NodeKind::Client) continue;
    endpoint[k] = "ep-" + std::string(to_string(k));
    rt.dispatch(runtime::make_descriptor(endpoint[k], k, "main"), "main", sys);
    kind_of[endpoint[k]] = k;
  }
  const auto container = rt.create_client_container();
  rt.open_client("client-ada", "ada", container);
  rt.open_client("client-stu", "stu", container);
  endpoint[NodeKind::Client] = "client-ada";
  kind_of["client-ada"] = kind_of["client-stu"] = NodeKind::Client;
  const std::map<std::string, Credentials> own{{"client-ada", auth.issue("ada")}, {"client-stu", auth.issue("stu")}};

  const auto table = expected_routes();
  std::size_t exhaustive = 0, accepted_total = 0;
  int corr = 0;
  auto envelope = [&](const std::string& from, const std::string& to, MessageKind k, const Credentials& c) {
    protocol::MessageEnvelope e;
    e.correlation_id = "r-" + std::to_string(++corr);
    e.from = from;
    e.to = to;
    e.kind = k;
    e.credentials = c;
    return e;
  };

  // Every (sender kind, target kind, message kind) with valid credentials.
  for (auto from : kAllNodeKinds) {
    for (auto to : kAllNodeKinds) {
      for (auto k : protocol::kAllMessageKinds) {
        const auto& src = endpoint[from];
        const auto creds = from == NodeKind::Client ? own.at(src) : sys;
        const bool accepted = rt.deliver(envelope(src, endpoint[to], k, creds)).accepted;
        ++exhaustive;
        if (accepted != static_cast<bool>(table.count({from, to, k}))) {
          v.fail(std::string(to_string(from)) + " -> " + std::string(to_string(to)) + " " +
                 std::string(to_string(k)) + (accepted ? " accepted" : " rejected"));
        }
      }
    }
  }
  rt.run_until_idle();

  // Fuzzed deliveries, mostly from clients, with a mix of good and bad credentials.
  std::mt19937_64 rng(4242);
  std::vector<std::string> senders{"client-ada", "client-stu", "client-ada", "client-stu", "nobody"};
  std::vector<std::string> targets{"nobody"};
  for (const auto& [id, _] : kind_of) {
    senders.push_back(id);
    targets.push_back(id);
  }
  std::size_t client_to_private = 0, client_attempts_private = 0;
  for (int i = 0; i < kFuzzedDeliveries; ++i) {
    const auto& from = senders[rng() % senders.size()];
    const auto& to = targets[rng() % targets.size()];
    const auto k = protocol::kAllMessageKinds[rng() % std::size(protocol::kAllMessageKinds)];
    Credentials c;
    const bool is_client = from.rfind("client-", 0) == 0;
    bool valid = true;
    switch (rng() % 6) {
      case 0: c = rogue.issue(is_client ? own.at(from).principal : "system"); valid = false; break;
      case 1: c = old_auth.issue(is_client ? own.at(from).principal : "system"); valid = false; break;
      case 2: c = is_client ? sys : auth.issue("ada"); valid = !is_client; break;  // someone else's
      case 3: c = own.at(from == "client-ada" ? "client-stu" : "client-ada"); valid = !is_client; break;
      default: c = is_client ? own.at(from) : sys;
    }
    auto e = envelope(from, to, k, c);
    e.payload = {{"noise", static_cast<std::uint64_t>(rng())}};
    const bool accepted = rt.deliver(e).accepted;
    accepted_total += accepted;
    const bool private_target =
        kind_of.count(to) && (kind_of[to] == NodeKind::AssA || kind_of[to] == NodeKind::Store);
    if (is_client && private_target) {
      ++client_attempts_private;
      client_to_private += accepted;
    }
    if (accepted) {
      const bool known = kind_of.count(from) && kind_of.count(to);
      if (!known || !valid || !table.count({kind_of[from], kind_of[to], k})) {
        v.fail("fuzzed delivery " + from + " -> " + to + " " + std::string(to_string(k)) + " accepted");
      }
    }
    if (i % 512 == 0) rt.run_until_idle();
  }
  if (client_to_private != 0) v.fail(std::to_string(client_to_private) + " client envelopes reached AssA/store");
  if (v.pass) {
    v.detail = std::to_string(exhaustive) + " triples exact; " + std::to_string(kFuzzedDeliveries) +
               " fuzzed deliveries (" + std::to_string(accepted_total) + " accepted), 0 of " +
               std::to_string(client_attempts_private) + " client->AssA/store accepted";
  }
  return v;
}

// ---------------------------------------------------------------------------

struct Observed {
  std::vector<json> delivered;
  std::map<std::string, std::vector<json>> inboxes;
  bool operator==(const Observed&) const = default;
};

json strip(const protocol::MessageEnvelope& e) {
  auto j = protocol::to_json(e);
  j.erase("msg_id");
  j.erase("ts");
  j["credentials"] = e.credentials.principal;  // tokens carry a fresh nonce per deployment
  return j;
}

struct Script {
  struct Request {
    std::size_t at_step;
    std::string session;
    json payload;
  };
  std::vector<Request> requests;
};

Script random_script(std::mt19937_64& rng) {
  static const std::vector<std::pair<std::string, std::string>> who{
      {"client-lee", "Academician"}, {"client-s1", "Student"}, {"client-s2", "Student"}};
  Script s;
  const int n = 1 + static_cast<int>(rng() % 5);
  for (int i = 0; i < n; ++i) {
    const auto& [session, role] = who[rng() % who.size()];
    json scope;
    switch (rng() % 4) {
      case 0: scope = {{"type", "CourseReport"}}; break;
      case 1: scope = {{"type", "StudentResult"}, {"student_id", "s" + std::to_string(1 + rng() % 3)}}; break;
      case 2: scope = {{"type", "ItemBreakdown"}, {"item_id", "CS101-J1"}}; break;
      default: scope = {{"type", "CourseReport"}}; break;
    }
    const std::string course = rng() % 8 == 0 ? "CS999" : "CS101";
    s.requests.push_back({rng() % 30, session,
                          {{"course_id", course}, {"scope", scope}, {"threshold", 0.5}, {"role", role}}});
  }
  return s;
}

// Runs `script`; with `cut`, the agent `victim` is checkpointed after that
// many scheduler steps, serialized, and resumed in a fresh container.
Observed run_script(const Script& script, std::optional<std::size_t> cut, const std::string& victim,
                    std::size_t* steps_taken = nullptr) {
  deployment::Deployment d(runtime::Mode::Deterministic, true, quiet_config());
  auto& p = d.platform;
  auto& rt = p.runtime();
  for (const auto& line : {"CS101,CS101-T1,s1,16", "CS101,CS101-A1,s1,8", "CS101,CS101-P1,s2,4",
                           "CS101,CS101-J1,s2,41", "CS101,CS101-T1,s3,11"}) {
    std::istringstream ss(line);
    std::string course, item, student, raw;
    std::getline(ss, course, ',');
    std::getline(ss, item, ',');
    std::getline(ss, student, ',');
    std::getline(ss, raw);
    p.store().put(store::score_key(item, student),
                  domain::to_json(domain::Score{student, item, std::stod(raw)}, course), p.system_credentials());
  }

  Observed seen;
  rt.set_delivery_observer([&](const protocol::MessageEnvelope& e) { seen.delivered.push_back(strip(e)); });
  std::map<std::string, Credentials> creds;
  for (const auto& [session, principal, kind] :
       {std::tuple{"client-lee", "lee", NodeKind::AA}, std::tuple{"client-s1", "s1", NodeKind::SA},
        std::tuple{"client-s2", "s2", NodeKind::SA}}) {
    creds[session] = p.auth().issue(principal);
    const auto c = rt.create_client_container();
    rt.open_client(session, principal, c);
    const std::string delegate = std::string(kind == NodeKind::AA ? "aa-" : "sa-") + session;
    rt.dispatch(runtime::make_descriptor(delegate, kind, c), c, creds[session]);
    protocol::MessageEnvelope hello;
    hello.correlation_id = std::string("login-") + session;
    hello.from = session;
    hello.to = Platform::kUia;
    hello.kind = MessageKind::LOGIN;
    hello.credentials = creds[session];
    hello.payload = {{"session_id", session}, {"delegate", delegate}};
    rt.deliver(hello);
  }

  std::size_t step = 0;
  std::size_t next_corr = 0;
  for (;;) {
    for (const auto& r : script.requests) {
      if (r.at_step != step) continue;
      protocol::MessageEnvelope e;
      e.correlation_id = "job-" + std::to_string(++next_corr);
      e.from = r.session;
      e.to = Platform::kUia;
      e.kind = MessageKind::ASSESS_REQUEST;
      e.credentials = creds[r.session];
      e.payload = r.payload;
      rt.deliver(e);
    }
    if (cut && *cut == step) {
      const auto blob = rt.checkpoint(victim);
      const auto bytes = blob.bytes;
      rt.resume(runtime::checkpoint_from_bytes(bytes), rt.create_client_container());
    }
    const bool more = rt.step();
    ++step;
    bool pending = false;
    for (const auto& r : script.requests) pending |= r.at_step >= step;
    if (!more && !pending) break;
  }
  p.settle();
  for (const auto& session : {"client-lee", "client-s1", "client-s2"}) {
    for (const auto& e : rt.client_inbox(session)) seen.inboxes[session].push_back(strip(e));
  }
  if (steps_taken) *steps_taken = step;
  return seen;
}

Verdict checkpoint_transparency() {
  Verdict v;
  std::mt19937_64 rng(777);
  const std::vector<std::string> victims{Platform::kUia, Platform::kAssa, Platform::kStore, Platform::kSaa,
                                         "aa-client-lee", "sa-client-s1", "sa-client-s2"};
  std::size_t envelopes = 0;
  for (int run = 0; run < kCheckpointRuns && v.pass; ++run) {
    const auto script = random_script(rng);
    std::size_t total = 0;
    const auto whole = run_script(script, std::nullopt, "", &total);
    const std::size_t cut = rng() % (total + 1);
    const auto& victim = victims[rng() % victims.size()];
    const auto split = run_script(script, cut, victim);
    envelopes += whole.delivered.size();
    if (!(split == whole)) {
      v.fail("run " + std::to_string(run) + ": checkpointing " + victim + " at step " + std::to_string(cut) +
             " changed the envelope sequence (" + std::to_string(whole.delivered.size()) + " vs " +
             std::to_string(split.delivered.size()) + " envelopes)");
    }
  }
  if (v.pass) {
    v.detail = std::to_string(kCheckpointRuns) + " split runs identical to unbroken runs (" +
               std::to_string(envelopes) + " envelopes compared)";
  }
  return v;
}

// ---------------------------------------------------------------------------

Verdict audit_exactness() {
  Verdict v;
  const auto dir = std::filesystem::temp_directory_path() / ("imobe-acceptance-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  auto config = quiet_config();
  config.store_path = dir / "store.ndjson";
  {
    deployment::Deployment d(runtime::Mode::Concurrent, true, config);
    auto& p = d.platform;
    const auto before = d.audits(audit::AuditAction::StoreWrite);
    const auto lee = p.auth().issue("lee");

    // Each writer cycles over 10 private keys and 5 keys shared by everyone.
    std::vector<std::map<std::string, std::vector<std::uint64_t>>> versions(kWriters);
    std::vector<std::string> errors(kWriters);
    std::vector<std::thread> threads;
    for (int w = 0; w < kWriters; ++w) {
      threads.emplace_back([&, w] {
        try {
          for (int i = 0; i < kPutsPerWriter; ++i) {
            const std::string id = i % 3 == 0 ? "SH" + std::to_string(i % 5)
                                              : "W" + std::to_string(w) + "-" + std::to_string(i % 10);
            domain::OutcomeNode node{id, domain::OutcomeLevel::Unit, "writer " + std::to_string(w), {}};
            const auto version = p.store().put(store::outcome_key(id), domain::to_json(node), lee);
            versions[w][id].push_back(version);
          }
        } catch (const std::exception& e) {
          errors[w] = e.what();
        }
      });
    }
    for (auto& t : threads) t.join();
    for (const auto& e : errors) {
      if (!e.empty()) v.fail("writer failed: " + e);
    }

    const auto writes = d.audits(audit::AuditAction::StoreWrite) - before;
    if (writes != static_cast<std::size_t>(kWriters * kPutsPerWriter)) {
      v.fail("StoreWrite events: " + std::to_string(writes) + ", expected " +
             std::to_string(kWriters * kPutsPerWriter));
    }
    // What each writer saw, per key, only ever goes up.
    std::map<std::string, std::size_t> puts;
    for (const auto& per_writer : versions) {
      for (const auto& [id, seq] : per_writer) {
        puts[id] += seq.size();
        if (!std::is_sorted(seq.begin(), seq.end()) || std::adjacent_find(seq.begin(), seq.end()) != seq.end()) {
          v.fail("versions of " + id + " went backwards for one writer");
        }
      }
    }
    // The audit trail lists every key's versions as 1, 2, ..., n in order.
    std::map<std::string, std::uint64_t> last;
    for (const auto& e : p.audit_log().events(0)) {
      if (e.action != audit::AuditAction::StoreWrite || e.principal != "lee") continue;
      const auto version = e.detail.at("version").get<std::uint64_t>();
      if (version != last[e.subject] + 1) {
        v.fail(e.subject + " audited version " + std::to_string(version) + " after " +
               std::to_string(last[e.subject]));
      }
      last[e.subject] = version;
    }
    for (const auto& [id, n] : puts) {
      const auto rec = p.store().get(store::outcome_key(id));
      if (!rec || rec->version != n) v.fail(id + ": final version differs from the number of puts");
    }
  }
  // And the log on disk replays to the same versions.
  {
    ManualClock clock;
    Authenticator auth("x", 3600, clock);
    store::Store reopened(config.store_path, auth, clock);
    std::size_t total = 0;
    for (const auto& r : reopened.records(store::Repository::Data)) {
      if (r.key.rfind("outcome/W", 0) == 0 || r.key.rfind("outcome/SH", 0) == 0) total += r.version;
    }
    if (total != static_cast<std::size_t>(kWriters * kPutsPerWriter)) {
      v.fail("replayed log holds " + std::to_string(total) + " versions");
    }
  }
  std::filesystem::remove_all(dir);
  if (v.pass) {
    v.detail = std::to_string(kWriters) + " writers x " + std::to_string(kPutsPerWriter) +
               " puts: 2000 StoreWrite events, versions monotone per key, log replays";
  }
  return v;
}

// ---------------------------------------------------------------------------

Verdict auth_totality() {
  Verdict v;
  deployment::Deployment d(runtime::Mode::Deterministic, true, quiet_config());
  auto& p = d.platform;
  d.import_demo_scores();

  // The three kinds of bad token, each with its documented error code.
  ManualClock past;
  past.set(d.clock.now_ms() - 3601 * 1000);
  Authenticator same_secret_earlier("acceptance-secret", 3600, past);
  Authenticator wrong_secret("forger", 3600, d.clock);
  const auto s3_token = d.login("s3", "s3-demo").first;
  behaviors::saa_manage_account(p.store(), p.audit_log(), p.anomaly_rule(),
                                {behaviors::AccountOp::Disable, "s3", {}, {}}, p.auth().issue("admin"));
  struct Bad {
    std::string name;
    Credentials creds;
    Errc code;
  };
  const std::vector<Bad> bad{
      {"forged", wrong_secret.issue("lee"), Errc::InvalidCredentials},
      {"expired", same_secret_earlier.issue("lee"), Errc::ExpiredCredentials},
      {"disabled", credentials_from_token(s3_token), Errc::InvalidCredentials},
  };

  std::size_t attempts = 0;
  // Runs one attempt and requires exactly one new AuthFailure event.
  auto one_audit = [&](const std::string& where, const std::function<void()>& attempt) {
    p.settle();
    const auto before = p.audit_log().events().size();
    attempt();
    p.settle();
    const auto events = p.audit_log().events();
    ++attempts;
    if (events.size() != before + 1) {
      v.fail(where + ": " + std::to_string(events.size() - before) + " audit events");
    } else if (events.back().action != audit::AuditAction::AuthFailure) {
      v.fail(where + ": audited as " + std::string(audit::to_string(events.back().action)));
    }
  };

  // login
  one_audit("login with a wrong secret", [&] {
    auto r = d.post("/api/v1/login", {{"principal", "lee"}, {"secret", "guess"}});
    if (r.status != 401 || json::parse(r.body)["code"] != "InvalidCredentials") v.fail("login: " + r.body);
  });
  one_audit("login of a disabled account", [&] {
    auto r = d.post("/api/v1/login", {{"principal", "s3"}, {"secret", "s3-demo"}});
    if (r.status != 403 || json::parse(r.body)["code"] != "AccountDisabled") v.fail("login: " + r.body);
  });

  auto [lee_token, lee_session] = d.login("lee", "lee-demo");
  const auto c = p.runtime().create_client_container();
  p.runtime().open_client("client-s3", "s3", c);

  for (const auto& b : bad) {
    // deliver
    one_audit("deliver/" + b.name, [&] {
      protocol::MessageEnvelope e;
      e.correlation_id = "auth-" + b.name;
      e.from = b.name == "disabled" ? "client-s3" : lee_session;
      e.to = Platform::kUia;
      e.kind = MessageKind::ASSESS_REQUEST;
      e.credentials = b.creds;
      auto r = p.runtime().deliver(e);
      if (r.accepted || r.reason != b.code) v.fail("deliver/" + b.name + " not rejected with the right code");
    });
    // put
    one_audit("put/" + b.name, [&] {
      try {
        p.store().put(store::outcome_key("X"), domain::to_json(domain::OutcomeNode{"X", domain::OutcomeLevel::Unit, "", {}}),
                      b.creds);
        v.fail("put/" + b.name + " accepted");
      } catch (const Error& e) {
        if (e.code() != b.code) v.fail("put/" + b.name + ": " + std::string(e.what()));
      }
    });
    // every HTTP route
    const std::vector<std::tuple<std::string, std::string, std::string, std::map<std::string, std::string>>> routes{
        {"POST", "/api/v1/assess", R"({"course_id":"CS101","scope":{"type":"CourseReport"}})", {}},
        {"POST", "/api/v1/scores", "course_id,item_id,student_id,raw_score\nCS101,CS101-T1,s1,1\n", {}},
        {"GET", "/api/v1/courses/CS101/attainment", "", {{"threshold", "0.5"}}},
        {"GET", "/api/v1/students/s1/results", "", {{"course_id", "CS101"}}},
        {"GET", "/api/v1/traces/c-1", "", {}},
        {"POST", "/api/v1/admin/users", R"({"principal":"eve","secret":"x","roles":["Administrator"]})", {}},
        {"GET", "/api/v1/admin/audit", "", {}},
    };
    for (const auto& [method, path, body, query] : routes) {
      one_audit(method + " " + path + "/" + b.name, [&] {
        auto r = d.request(method, path, body, b.creds.token, query);
        if (r.status != 401 || json::parse(r.body)["code"] != std::string(to_string(b.code))) {
          v.fail(method + " " + path + "/" + b.name + ": " + std::to_string(r.status) + " " + r.body);
        }
      });
    }
  }
  if (p.store().get(store::user_key("eve")) || p.store().get(store::outcome_key("X"))) {
    v.fail("a rejected request changed the store");
  }
  if (v.pass) {
    v.detail = std::to_string(attempts) +
               " attempts (login, deliver, put, 7 HTTP routes x forged/expired/disabled): each rejected "
               "with its code and exactly one AuthFailure";
  }
  return v;
}

// ---------------------------------------------------------------------------

std::vector<double> values_of(const domain::AttainmentReport& r) {
  std::vector<double> out;
  for (const auto& [s, cos] : r.per_student) {
    for (const auto& [co, x] : cos) out.push_back(x);
  }
  for (const auto& [co, c] : r.cohort) {
    out.push_back(c.mean);
    out.push_back(c.fraction_above_threshold);
  }
  for (const auto& [po, x] : r.po_rollup) out.push_back(x);
  return out;
}

Verdict domain_invariants() {
  Verdict v;
  std::mt19937_64 rng(99);
  double worst = 0;
  std::size_t compared = 0;
  for (int n = 0; n < kInvariantInstances && v.pass; ++n) {
    const auto in = gen::random_instance(rng, 5, 4, 3);
    const auto base = domain::build_report(in.course, in.scores, in.items, in.hierarchy, in.threshold);

    // Weight scale.
    const double c = std::exp(std::uniform_real_distribution<double>(std::log(1e-3), std::log(1e3))(rng));
    auto scaled_items = in.items;
    for (auto& item : scaled_items) {
      for (auto& [co, w] : item.co_weights) w *= c;
    }
    const auto scaled = domain::build_report(in.course, in.scores, scaled_items, in.hierarchy, in.threshold);
    const auto a = values_of(base), b = values_of(scaled);
    if (a.size() != b.size() || scaled.per_student.size() != base.per_student.size()) {
      v.fail("instance " + std::to_string(n) + ": scaling changed the report's shape");
      break;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
      worst = std::max(worst, std::abs(a[i] - b[i]));
      if (std::abs(a[i] - b[i]) > kScaleTolerance) {
        v.fail("instance " + std::to_string(n) + ": scaling by " + std::to_string(c) + " moved a value by " +
               std::to_string(std::abs(a[i] - b[i])));
      }
    }

    // Monotonicity: raise one score (or add a missing one).
    auto raised = in.scores;
    const auto& item = in.items[rng() % in.items.size()];
    const std::string student = in.scores[rng() % in.scores.size()].student_id;
    auto it = std::find_if(raised.begin(), raised.end(),
                           [&](const auto& s) { return s.student_id == student && s.item_id == item.id; });
    if (it == raised.end()) {
      raised.push_back({student, item.id, std::uniform_real_distribution<double>(0, item.max_marks)(rng)});
    } else {
      it->raw = std::uniform_real_distribution<double>(it->raw, item.max_marks)(rng);
    }
    const auto up = domain::build_report(in.course, raised, in.items, in.hierarchy, in.threshold);
    for (const auto& [s, cos] : base.per_student) {
      for (const auto& [co, x] : cos) {
        ++compared;
        if (up.per_student.at(s).at(co) < x) v.fail("instance " + std::to_string(n) + ": per-student " + co + " fell");
      }
    }
    for (const auto& [co, stat] : base.cohort) {
      ++compared;
      if (up.cohort.at(co).mean < stat.mean) v.fail("instance " + std::to_string(n) + ": cohort mean " + co + " fell");
    }
    for (const auto& [po, x] : base.po_rollup) {
      ++compared;
      if (up.po_rollup.at(po) < x) v.fail("instance " + std::to_string(n) + ": " + po + " fell");
    }
  }
  if (v.pass) {
    std::ostringstream ss;
    ss << kInvariantInstances << " instances: max scale drift " << worst << " (<= " << kScaleTolerance << "), "
       << compared << " monotonicity comparisons exact";
    v.detail = ss.str();
  }
  return v;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"trace-conformance", trace_conformance},
      {"attainment-oracle", attainment_oracle},
      {"routing-soundness", routing_soundness},
      {"checkpoint-transparency", checkpoint_transparency},
      {"audit-exactness", audit_exactness},
      {"auth-totality", auth_totality},
      {"weight-scale-and-monotonicity", domain_invariants},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v.fail(std::string("threw: ") + e.what());
    }
    failed += !v.pass;
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
