#include "imobe/scenario.hpp"

#include <filesystem>

#include "imobe/error.hpp"

namespace imobe::scenario {

using nlohmann::json;
using protocol::TraceStep;

Fault fault_from_string(std::string_view name) {
  if (name == "none") return Fault::None;
  if (name == "store-removed") return Fault::StoreRemoved;
  if (name == "forged-token") return Fault::ForgedToken;
  throw Error(Errc::Usage, "unknown fault '" + std::string(name) + "'");
}

namespace {

HttpResponse post(Gateway& gw, const std::string& path, const json& body, const std::string& token = {}) {
  HttpRequest r;
  r.method = "POST";
  r.path = path;
  r.body = body.dump();
  if (!token.empty()) r.headers["authorization"] = "Bearer " + token;
  return gw.handle(r);
}

// Same principal, same timestamps, wrong MAC.
std::string forge(std::string token) {
  if (token.empty()) return "x";
  token.back() = token.back() == '0' ? '1' : '0';
  return token;
}

std::string describe(const std::vector<TraceStep>& steps, std::size_t i) {
  return i < steps.size() ? protocol::format_step(steps[i]) : "end of trace";
}

}  // namespace

Outcome run(Platform& platform, Gateway& gw, const Options& options) {
  Outcome out;
  auto login = post(gw, "/api/v1/login", {{"principal", options.principal}, {"secret", options.secret}});
  if (login.status != 200) {
    out.http_status = login.status;
    out.response = json::parse(login.body);
    out.diagnosis = "login failed: " + login.body;
    return out;
  }
  std::string token = json::parse(login.body)["token"];

  if (options.fault == Fault::StoreRemoved) {
    const auto& path = platform.config().store_path;
    if (path.empty()) throw Error(Errc::Usage, "store-removed needs a file-backed store");
    std::filesystem::remove(path);
  }
  if (options.fault == Fault::ForgedToken) token = forge(token);

  auto r = post(gw, "/api/v1/assess",
                {{"course_id", options.course_id},
                 {"scope", {{"type", "CourseReport"}}},
                 {"threshold", platform.config().attainment_threshold}},
                token);
  out.http_status = r.status;
  out.response = json::parse(r.body);
  out.correlation_id = out.response.value("correlation_id", "");
  platform.settle();

  const auto& monitor = platform.runtime().workflows();
  if (!out.correlation_id.empty()) {
    for (const auto& t : monitor.trace(out.correlation_id)) {
      out.steps.push_back(t.step());
      out.lines.push_back(std::to_string(out.steps.size()) + ". " + protocol::format_step(t.step()) +
                          "  msg_id=" + t.envelope.msg_id + " ts=" + std::to_string(t.envelope.ts));
    }
  }

  const auto canonical = protocol::canonical_trace(NodeKind::AA);
  out.conforms = out.steps == canonical && r.status == 200;
  if (out.conforms) return out;

  std::size_t i = 0;
  while (i < out.steps.size() && i < canonical.size() && out.steps[i] == canonical[i]) ++i;
  out.diagnosis = "divergence at step " + std::to_string(i + 1);
  if (i > 0) out.diagnosis += " (after " + describe(canonical, i - 1) + ")";
  out.diagnosis += ": expected " + describe(canonical, i) + ", got " + describe(out.steps, i);
  if (!out.correlation_id.empty()) {
    if (auto st = monitor.state(out.correlation_id); st && st->failure_reason) {
      out.diagnosis += "; workflow failed: " + *st->failure_reason;
    }
  } else {
    out.diagnosis += "; request rejected with " + std::to_string(r.status) + " " +
                     out.response.value("code", std::string("?"));
    if (r.status == 401) out.diagnosis += " (AuthFailure audited)";
  }
  return out;
}

}  // namespace imobe::scenario
