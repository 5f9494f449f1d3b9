// Operator tool: serve, seed, import, report, simulate-scenario, audit.
//
// Exit codes: 0 ok, 1 assertion failure or divergence, 2 usage, 3 I/O.

#include <pthread.h>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "imobe/error.hpp"
#include "imobe/fixture.hpp"
#include "imobe/gateway.hpp"
#include "imobe/scenario.hpp"

using namespace imobe;
using nlohmann::json;

namespace {

constexpr int kOk = 0, kFailed = 1, kUsage = 2, kIo = 3;

int exit_code(Errc code) {
  switch (code) {
    case Errc::Usage: return kUsage;
    case Errc::Io:
    case Errc::StoreOpenFailure:
    case Errc::BindFailure:
    case Errc::StoreUnavailable:
      return kIo;
    default:
      return kFailed;
  }
}

struct Globals {
  std::string config_file;
  std::vector<std::string> sets;
  std::string store;
  std::string listen;
  std::optional<double> threshold;

  Config resolve() const {
    Config c = config_file.empty() ? Config{} : load_config(config_file);
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw Error(Errc::Usage, "--set expects key=value, got '" + kv + "'");
      c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!store.empty()) c.store_path = store;
    if (!listen.empty()) c.listen_address = listen;
    if (threshold) c.attainment_threshold = *threshold;
    c.validate();
    return c;
  }
};

// Wire codes that are not error codes ("NotFound") map to a generic one.
Errc errc_of(const std::string& code) {
  try {
    return errc_from_string(code);
  } catch (const Error&) {
    return Errc::Malformed;
  }
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

HttpResponse call(Gateway& gw, const std::string& method, const std::string& path, const std::string& body,
                  const std::string& token = {}, std::map<std::string, std::string> query = {}) {
  HttpRequest r;
  r.method = method;
  r.path = path;
  r.body = body;
  r.query = std::move(query);
  if (!token.empty()) r.headers["authorization"] = "Bearer " + token;
  return gw.handle(r);
}

std::string login(Gateway& gw, const std::string& principal, const std::string& secret) {
  auto r = call(gw, "POST", "/api/v1/login", json{{"principal", principal}, {"secret", secret}}.dump());
  auto body = json::parse(r.body);
  if (r.status != 200) {
    throw Error(errc_of(body.value("code", "InvalidCredentials")), body.value("reason", ""));
  }
  return body["token"];
}

// Fails with the error carried by a non-2xx gateway answer.
json expect_ok(const HttpResponse& r) {
  auto body = json::parse(r.body);
  if (r.status / 100 != 2) {
    throw Error(errc_of(body.value("code", "Malformed")), body.value("reason", r.body));
  }
  return body;
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(4) << v;
  return ss.str();
}

void print_table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& row : rows) {
    width.resize(std::max(width.size(), row.size()));
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  }
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::cout << (i ? "  " : "") << std::left << std::setw(static_cast<int>(width[i])) << row[i];
    }
    std::cout << "\n";
  }
}

void print_pretty(const json& result) {
  if (result.contains("per_student")) {
    if (result.contains("cohort")) {  // course report
      std::vector<std::string> cos;
      for (const auto& [co, _] : result["cohort"].items()) cos.push_back(co);
      std::vector<std::vector<std::string>> rows{{"student"}};
      rows[0].insert(rows[0].end(), cos.begin(), cos.end());
      for (const auto& [sid, values] : result["per_student"].items()) {
        rows.push_back({sid});
        for (const auto& co : cos) rows.back().push_back(values.contains(co) ? fmt(values[co]) : "-");
      }
      rows.push_back({"mean"});
      rows.push_back({">= " + fmt(result["threshold"])});
      for (const auto& co : cos) {
        rows[rows.size() - 2].push_back(fmt(result["cohort"][co]["mean"]));
        rows.back().push_back(fmt(result["cohort"][co]["fraction_above_threshold"]));
      }
      std::cout << "course " << result["course_id"].get<std::string>() << "\n";
      print_table(rows);
      std::vector<std::vector<std::string>> po{{"program outcome", "attainment"}};
      for (const auto& [id, v] : result["po_rollup"].items()) po.push_back({id, fmt(v)});
      std::cout << "\n";
      print_table(po);
      return;
    }
    std::vector<std::vector<std::string>> rows{{"student", "fraction"}};  // item breakdown
    for (const auto& [sid, v] : result["per_student"].items()) rows.push_back({sid, fmt(v)});
    rows.push_back({"mean", fmt(result["mean"])});
    std::cout << "item " << result["item_id"].get<std::string>() << "\n";
    print_table(rows);
    return;
  }
  std::vector<std::vector<std::string>> rows{{"outcome", "attainment"}};
  for (const auto& [co, v] : result["co_attainment"].items()) rows.push_back({co, fmt(v)});
  std::cout << "student " << result["student_id"].get<std::string>() << ", course "
            << result["course_id"].get<std::string>() << "\n";
  print_table(rows);
}

int serve(const Config& config) {
  // Signals are taken by a dedicated thread; every other thread blocks them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  SystemClock clock;
  Platform platform(config, clock, runtime::Mode::Concurrent);
  Gateway gw(platform);
  const int port = gw.bind(config.listen_address);
  const auto host = config.listen_address.substr(0, config.listen_address.rfind(':'));
  std::cout << "listening on " << host << ":" << port << std::endl;

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    gw.stop();
  });
  gw.listen();
  // listen() also returns on its own failure; release the waiter then.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  platform.settle();
  std::cout << "stopped" << std::endl;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"i-MOBE operator tool"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-c,--config", g.config_file, "key=value configuration file");
  app.add_option("--set", g.sets, "override one config key (key=value); repeatable");
  app.add_option("--store", g.store, "store file (overrides store_path)");
  app.add_option("--listen", g.listen, "host:port (overrides listen_address)");
  app.add_option("--threshold", g.threshold, "attainment threshold (overrides attainment_threshold)");

  auto* serve_cmd = app.add_subcommand("serve", "run the HTTP gateway and the agents until SIGINT/SIGTERM");

  std::string fixture_file;
  auto* seed_cmd = app.add_subcommand("seed", "load a curriculum fixture into the store");
  seed_cmd->add_option("fixture", fixture_file, "fixture JSON")->required();

  std::string csv_file, principal, secret;
  auto* import_cmd = app.add_subcommand("import", "import a score CSV as an academician");
  import_cmd->add_option("csv", csv_file, "course_id,item_id,student_id,raw_score file")->required();
  import_cmd->add_option("-u,--principal", principal)->required();
  import_cmd->add_option("-p,--secret", secret)->required();

  std::string course, student, item;
  bool pretty = false;
  auto* report_cmd = app.add_subcommand("report", "compute a report through the agents");
  report_cmd->add_option("course", course)->required();
  report_cmd->add_option("-u,--principal", principal)->required();
  report_cmd->add_option("-p,--secret", secret)->required();
  report_cmd->add_option("--student", student, "StudentResult for this student");
  report_cmd->add_option("--item", item, "ItemBreakdown for this item");
  report_cmd->add_flag("--pretty", pretty, "aligned table instead of JSON");

  std::string fault = "none", scores_file;
  scenario::Options scenario_options;
  auto* sim_cmd = app.add_subcommand("simulate-scenario", "run the canonical request and check its trace");
  sim_cmd->add_option("--fixture", fixture_file, "seed this fixture first");
  sim_cmd->add_option("--scores", scores_file, "import this score CSV first");
  sim_cmd->add_option("--inject-fault", fault, "none | store-removed | forged-token");
  sim_cmd->add_option("-u,--principal", scenario_options.principal);
  sim_cmd->add_option("-p,--secret", scenario_options.secret);
  sim_cmd->add_option("--course", scenario_options.course_id);

  std::uint64_t after = 0;
  auto* audit_cmd = app.add_subcommand("audit", "print the audit log and anomaly flags");
  audit_cmd->add_option("--after", after, "only events with a larger id");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    const Config config = g.resolve();

    if (*serve_cmd) return serve(config);

    if (*seed_cmd) {
      SystemClock clock;
      Platform platform(config, clock, runtime::Mode::Deterministic);
      auto counts = fixture::seed(platform.store(), fixture::load_json(fixture_file),
                                  platform.system_credentials());
      platform.settle();
      std::cout << fixture::to_json(counts).dump() << "\n";
      return kOk;
    }

    if (*import_cmd) {
      SystemClock clock;
      Platform platform(config, clock, runtime::Mode::Deterministic);
      Gateway gw(platform);
      const auto token = login(gw, principal, secret);
      auto body = expect_ok(call(gw, "POST", "/api/v1/scores", slurp(csv_file), token));
      platform.settle();
      std::cout << body.dump() << "\n";
      return body["rejected"].empty() ? kOk : kFailed;
    }

    if (*report_cmd) {
      if (!student.empty() && !item.empty()) throw Error(Errc::Usage, "--student and --item are exclusive");
      SystemClock clock;
      Platform platform(config, clock, runtime::Mode::Deterministic);
      Gateway gw(platform);
      const auto token = login(gw, principal, secret);
      json scope{{"type", "CourseReport"}};
      if (!student.empty()) scope = {{"type", "StudentResult"}, {"student_id", student}};
      if (!item.empty()) scope = {{"type", "ItemBreakdown"}, {"item_id", item}};
      json ask{{"course_id", course}, {"scope", scope}, {"threshold", config.attainment_threshold}};
      auto body = expect_ok(call(gw, "POST", "/api/v1/assess", ask.dump(), token));
      platform.settle();
      if (pretty) {
        print_pretty(body["result"]);
      } else {
        std::cout << body["result"].dump() << "\n";
      }
      return kOk;
    }

    if (*sim_cmd) {
      scenario_options.fault = scenario::fault_from_string(fault);
      Config c = config;
      // store-removed needs a file to remove; use a scratch copy when the
      // configuration is in-memory.
      std::filesystem::path scratch;
      if (scenario_options.fault == scenario::Fault::StoreRemoved && c.store_path.empty()) {
        scratch = std::filesystem::temp_directory_path() /
                  ("imobe-scenario-" + std::to_string(::getpid()));
        std::filesystem::create_directories(scratch);
        c.store_path = scratch / "store.ndjson";
      }
      int rc = kFailed;
      {
        SystemClock clock;
        Platform platform(c, clock, runtime::Mode::Deterministic);
        Gateway gw(platform);
        if (!fixture_file.empty()) {
          fixture::seed(platform.store(), fixture::load_json(fixture_file), platform.system_credentials());
        }
        if (!scores_file.empty()) {
          const auto token = login(gw, scenario_options.principal, scenario_options.secret);
          auto body = expect_ok(call(gw, "POST", "/api/v1/scores", slurp(scores_file), token));
          if (!body["rejected"].empty()) throw Error(Errc::ValidationFailure, "score import: " + body.dump());
        }
        auto out = scenario::run(platform, gw, scenario_options);
        for (const auto& line : out.lines) std::cout << line << "\n";
        if (out.conforms) {
          std::cout << "trace matches the canonical " << out.steps.size() << "-step sequence\n";
          rc = kOk;
        } else {
          std::cout << out.diagnosis << "\n";
        }
      }
      if (!scratch.empty()) std::filesystem::remove_all(scratch);
      return rc;
    }

    if (*audit_cmd) {
      auto path = config.audit_path;
      if (path.empty() && !config.store_path.empty()) path = config.store_path.string() + ".audit";
      if (path.empty()) throw Error(Errc::Usage, "audit needs store_path or audit_path");
      if (!std::filesystem::exists(path)) throw Error(Errc::Io, "no audit log at " + path.string());
      audit::AuditLog log(path);
      json events = json::array(), flags = json::array();
      for (const auto& e : log.events(after)) events.push_back(audit::to_json(e));
      for (const auto& f : log.flags()) flags.push_back(audit::to_json(f));
      std::cout << json{{"events", events}, {"flags", flags}}.dump() << "\n";
      return kOk;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  }
  return kUsage;
}
