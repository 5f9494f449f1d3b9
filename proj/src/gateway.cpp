#include "imobe/gateway.hpp"

#include <charconv>
#include <sstream>

#include "httplib.h"
#include "imobe/crypto.hpp"
#include "imobe/error.hpp"
#include "imobe/json_util.hpp"

namespace imobe {

using nlohmann::json;
using protocol::MessageKind;

struct Gateway::Server {
  httplib::Server http;
};

int http_status(Errc code) {
  switch (code) {
    case Errc::InvalidCredentials:
    case Errc::ExpiredCredentials:
    case Errc::UnknownPrincipal: return 401;
    case Errc::AccountDisabled:
    case Errc::Unauthorized:
    case Errc::ScopeForbidden:
    case Errc::RouteForbidden: return 403;
    case Errc::UnknownCourse:
    case Errc::UnknownItem:
    case Errc::EmptyCohort:  // nothing recorded for that course or student
    case Errc::AgentUnknown: return 404;
    case Errc::DuplicatePrincipal: return 409;
    case Errc::Timeout: return 504;
    case Errc::Malformed:
    case Errc::MissingField:
    case Errc::ValidationFailure:
    case Errc::InvalidThreshold:
    case Errc::UnsupportedScope:
    case Errc::InvalidKeyPrefix:
    case Errc::Usage: return 400;
    default: return 502;
  }
}

namespace {

audit::AuditAction action_for(int status, const std::string& code) {
  if (status == 401 || code == "AccountDisabled") return audit::AuditAction::AuthFailure;
  if (status == 403) return audit::AuditAction::RouteRejection;
  return audit::AuditAction::RequestFailure;
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> out;
  std::string part;
  std::istringstream in(path);
  while (std::getline(in, part, '/')) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

json parse_body(const std::string& body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(Errc::Malformed, "body must be a JSON object");
  return j;
}

Role primary_role(const std::set<Role>& roles) {
  for (Role r : {Role::Administrator, Role::Academician, Role::Student}) {
    if (roles.count(r)) return r;
  }
  throw Error(Errc::Unauthorized, "account has no usable role");
}

std::string trim_cr(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  return s;
}

std::optional<double> parse_double(const std::string& s) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

}  // namespace

Gateway::Gateway(Platform& platform) : platform_(platform) {}

Gateway::~Gateway() { stop(); }

HttpResponse Gateway::error(int status, Errc code, const std::string& reason,
                            const std::string& principal, const std::string& correlation_id) {
  return error(status, std::string(to_string(code)), reason, principal, correlation_id);
}

HttpResponse Gateway::error(int status, const std::string& code, const std::string& reason,
                            const std::string& principal, const std::string& correlation_id) {
  json body{{"code", code}, {"reason", reason}};
  if (!correlation_id.empty()) body["correlation_id"] = correlation_id;
  platform_.audit_from(Platform::kUia,
                       {0, platform_.clock().now_ms(), principal.empty() ? "anonymous" : principal,
                        action_for(status, code), "http",
                        {{"status", status}, {"code", code}, {"reason", reason},
                         {"correlation_id", correlation_id}}});
  return {status, body.dump()};
}

Session Gateway::authenticate(const HttpRequest& r) {
  auto it = r.headers.find("authorization");
  if (it == r.headers.end() || it->second.rfind("Bearer ", 0) != 0) {
    throw Error(Errc::InvalidCredentials, "missing bearer token");
  }
  const auto creds = credentials_from_token(it->second.substr(7));
  platform_.auth().authenticate(creds);
  std::lock_guard lock(mu_);
  auto t = by_token_.find(creds.token);
  if (t == by_token_.end()) throw Error(Errc::InvalidCredentials, "no session for this token");
  return sessions_.at(t->second);
}

HttpResponse Gateway::handle(const HttpRequest& r) {
  const auto parts = split_path(r.path);
  if (parts.size() < 3 || parts[0] != "api" || parts[1] != "v1") {
    return error(404, "NotFound", "no route " + r.path, "", "");
  }
  const std::string& head = parts[2];
  if (head == "login") {
    if (r.method != "POST" || parts.size() != 3) {
      return error(400, Errc::Malformed, "login expects POST with a JSON body", "");
    }
    return login(r);
  }

  Session s;
  try {
    s = authenticate(r);
  } catch (const Error& e) {
    std::string principal;
    if (auto it = r.headers.find("authorization"); it != r.headers.end()) {
      try {
        principal = credentials_from_token(it->second.substr(std::min<std::size_t>(7, it->second.size()))).principal;
      } catch (const Error&) {
      }
    }
    return error(401, e.code(), e.detail(), principal);
  }

  try {
    const auto n = parts.size();
    if (head == "assess" && n == 3 && r.method == "POST") return assess(s, parse_body(r.body));
    if (head == "scores" && n == 3 && r.method == "POST") return import_scores(s, r.body);
    if (head == "courses" && n == 5 && parts[4] == "attainment" && r.method == "GET") {
      json body{{"course_id", parts[3]}, {"scope", {{"type", "CourseReport"}}}};
      if (auto t = r.query.find("threshold"); t != r.query.end()) {
        auto v = parse_double(t->second);
        if (!v) throw Error(Errc::InvalidThreshold, "threshold must be a number");
        body["threshold"] = *v;
      }
      return assess(s, body);
    }
    if (head == "students" && n == 5 && parts[4] == "results" && r.method == "GET") {
      auto c = r.query.find("course_id");
      if (c == r.query.end()) throw Error(Errc::MissingField, "course_id query parameter is required");
      return assess(s, {{"course_id", c->second},
                        {"scope", {{"type", "StudentResult"}, {"student_id", parts[3]}}}});
    }
    if (head == "traces" && n == 4 && r.method == "GET") return trace(s, parts[3]);
    if (head == "admin" && n == 4 && parts[3] == "users" && r.method == "POST") {
      return admin_users(s, r.body);
    }
    if (head == "admin" && n == 4 && parts[3] == "audit" && r.method == "GET") {
      return admin_audit(s, r);
    }
    return error(404, "NotFound", "no route " + r.method + " " + r.path, s.principal, "");
  } catch (const Error& e) {
    return error(http_status(e.code()), e.code(), e.detail(), s.principal);
  }
}

HttpResponse Gateway::login(const HttpRequest& r) {
  std::string principal;
  try {
    const json body = parse_body(r.body);
    principal = jsonutil::get_string(body, "principal", Errc::MissingField);
    const auto secret = jsonutil::get_string(body, "secret", Errc::MissingField);

    auto record = platform_.store().get(store::user_key(principal));
    if (!record) throw Error(Errc::InvalidCredentials, "unknown principal or wrong secret");
    const auto user = store::user_from_json(record->doc);
    if (!store::secret_matches(user, secret)) {
      throw Error(Errc::InvalidCredentials, "unknown principal or wrong secret");
    }
    if (!user.enabled) throw Error(Errc::AccountDisabled, principal + " is disabled");

    sweep_expired();
    auto& rt = platform_.runtime();
    Session s;
    s.principal = principal;
    s.roles = user.roles;
    s.role = primary_role(user.roles);
    s.credentials = platform_.auth().issue(principal);
    s.session_id = "s-" + crypto::random_hex(8);
    s.created_ts = s.credentials.issued_at;
    s.expires_ts = s.created_ts + platform_.auth().ttl_s() * 1000;
    s.container = rt.create_client_container();
    rt.open_client(s.session_id, principal, s.container);

    if (s.role != Role::Administrator) {
      const NodeKind kind = s.role == Role::Student ? NodeKind::SA : NodeKind::AA;
      s.delegate = (kind == NodeKind::SA ? "sa-" : "aa-") + s.session_id;
      rt.dispatch(runtime::make_descriptor(s.delegate, kind, s.container), s.container,
                  s.credentials);
      runtime::MessageEnvelope hello;
      hello.correlation_id = "login-" + s.session_id;
      hello.from = s.session_id;
      hello.to = Platform::kUia;
      hello.kind = MessageKind::LOGIN;
      hello.credentials = s.credentials;
      hello.payload = {{"session_id", s.session_id}, {"delegate", s.delegate}};
      auto res = rt.deliver(std::move(hello));
      if (!res.accepted) throw Error(*res.reason, res.detail);
    }
    {
      std::lock_guard lock(mu_);
      by_token_[s.credentials.token] = s.session_id;
      sessions_[s.session_id] = s;
    }
    return {200, json{{"token", s.credentials.token},
                      {"session_id", s.session_id},
                      {"principal", principal},
                      {"role", to_string(s.role)},
                      {"expires_ts", s.expires_ts}}
                     .dump()};
  } catch (const Error& e) {
    return error(http_status(e.code()), e.code(), e.detail(), principal);
  }
}

HttpResponse Gateway::assess(const Session& s, const json& body) {
  if (s.delegate.empty()) {
    throw Error(Errc::ScopeForbidden,
                std::string(to_string(s.role)) + " sessions cannot request assessments");
  }
  // Validate the request shape here so that bad input is a 400, not a
  // failed workflow.
  json payload{{"course_id", jsonutil::get_string(body, "course_id", Errc::MissingField)},
               {"scope", behaviors::to_json(behaviors::scope_from_json(
                             jsonutil::field(body, "scope", Errc::MissingField)))},
               {"threshold", platform_.config().attainment_threshold},
               {"role", to_string(s.role)}};
  if (body.contains("threshold")) {
    const double t = jsonutil::get_number(body, "threshold");
    if (!(t > 0.0 && t < 1.0)) throw Error(Errc::InvalidThreshold, "threshold must lie in (0,1)");
    payload["threshold"] = t;
  }

  auto& rt = platform_.runtime();
  const std::string corr = rt.next_correlation_id();
  runtime::MessageEnvelope e;
  e.correlation_id = corr;
  e.from = s.session_id;
  e.to = Platform::kUia;
  e.kind = MessageKind::ASSESS_REQUEST;
  e.credentials = s.credentials;
  e.payload = payload;
  auto res = rt.deliver(e);
  if (!res.accepted) return error(http_status(*res.reason), *res.reason, res.detail, s.principal, corr);

  const auto wait = std::chrono::milliseconds(platform_.config().workflow_budget_ms + 500);
  auto reply = rt.await_client(s.session_id, corr, wait);
  json summary{{"correlation_id", corr}, {"course_id", payload["course_id"]}, {"scope", payload["scope"]}};
  if (!reply) {
    summary["status"] = 504;
    remember_request(s, summary);
    return error(504, Errc::Timeout, "no result within the workflow budget", s.principal, corr);
  }
  if (reply->kind == MessageKind::ERROR) {
    const auto code = jsonutil::opt_string(reply->payload, "code", "ProtocolViolation");
    const auto reason = jsonutil::opt_string(reply->payload, "reason", code);
    int status = 502;
    try {
      status = http_status(errc_from_string(code));
    } catch (const Error&) {
    }
    if (status != 401 && status != 403 && status != 404 && status != 504) status = 502;
    summary["status"] = status;
    remember_request(s, summary);
    return error(status, code, reason, s.principal, corr);
  }
  summary["status"] = 200;
  remember_request(s, summary);
  // The PRESENT payload is the response, unchanged.
  return {200, reply->payload.dump()};
}

void Gateway::remember_request(const Session& s, const json& summary) {
  try {
    auto& st = platform_.store();
    auto record = st.get(store::user_key(s.principal));
    if (!record) return;
    auto doc = record->doc;
    doc["last_request"] = summary;
    doc["last_request"]["ts"] = platform_.clock().now_ms();
    st.put(record->key, doc, platform_.system_credentials());
  } catch (const Error&) {
    // Metadata only; never fails the request.
  }
}

HttpResponse Gateway::import_scores(const Session& s, const std::string& csv) {
  if (!s.roles.count(Role::Academician)) {
    throw Error(Errc::Unauthorized, "score import requires the Academician role");
  }
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || trim_cr(line) != "course_id,item_id,student_id,raw_score") {
    throw Error(Errc::Malformed, "expected header course_id,item_id,student_id,raw_score");
  }
  std::size_t accepted = 0;
  json rejected = json::array();
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    line = trim_cr(line);
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    try {
      if (f.size() != 4) throw Error(Errc::Malformed, "expected 4 fields, got " + std::to_string(f.size()));
      for (const auto& x : f) {
        if (x.empty()) throw Error(Errc::Malformed, "empty field");
      }
      auto raw = parse_double(f[3]);
      if (!raw) throw Error(Errc::Malformed, "raw_score '" + f[3] + "' is not a number");
      const domain::Score score{f[2], f[1], *raw};
      platform_.store().put(store::score_key(f[1], f[2]), domain::to_json(score, f[0]),
                            s.credentials);
      ++accepted;
    } catch (const Error& e) {
      rejected.push_back({{"line", n}, {"code", to_string(e.code())}, {"reason", e.detail()}});
    }
  }
  return {200, json{{"accepted", accepted}, {"rejected", rejected}}.dump()};
}

HttpResponse Gateway::trace(const Session& s, const std::string& correlation_id) {
  const auto& monitor = platform_.runtime().workflows();
  auto state = monitor.state(correlation_id);
  if (!state) throw Error(Errc::AgentUnknown, "no workflow " + correlation_id);
  if (state->client != s.session_id && !s.roles.count(Role::Administrator)) {
    throw Error(Errc::Unauthorized, "workflow " + correlation_id + " belongs to another session");
  }
  json steps = json::array();
  for (const auto& t : monitor.trace(correlation_id)) {
    steps.push_back({{"line", protocol::format_step(t.step())},
                     {"from", t.envelope.from},
                     {"to", t.envelope.to},
                     {"kind", to_string(t.envelope.kind)},
                     {"msg_id", t.envelope.msg_id},
                     {"ts", t.envelope.ts}});
  }
  json body{{"correlation_id", correlation_id}, {"phase", to_string(state->phase)}, {"steps", steps}};
  if (state->failure_reason) body["failure_reason"] = *state->failure_reason;
  return {200, body.dump()};
}

HttpResponse Gateway::admin_users(const Session& s, const std::string& raw) {
  if (!s.roles.count(Role::Administrator)) {
    throw Error(Errc::Unauthorized, "administrator role required");
  }
  const json body = parse_body(raw);
  behaviors::AccountRequest req;
  req.op = behaviors::account_op_from_string(jsonutil::opt_string(body, "op", "Create"));
  req.principal = jsonutil::get_string(body, "principal", Errc::MissingField);
  req.secret = jsonutil::opt_string(body, "secret");
  if (auto roles = body.find("roles"); roles != body.end()) {
    if (!roles->is_array()) throw Error(Errc::Malformed, "roles must be an array");
    for (const auto& r : *roles) {
      if (!r.is_string()) throw Error(Errc::Malformed, "role must be a string");
      req.roles.insert(role_from_string(r.get<std::string>()));
    }
  }
  auto profile = behaviors::saa_manage_account(platform_.store(), platform_.audit_log(),
                                               platform_.anomaly_rule(), req, s.credentials);
  json shown = store::to_json(profile);
  shown.erase("salt");
  shown.erase("secret_hash");
  return {200, shown.dump()};
}

HttpResponse Gateway::admin_audit(const Session& s, const HttpRequest& r) {
  if (!s.roles.count(Role::Administrator)) {
    throw Error(Errc::Unauthorized, "administrator role required");
  }
  std::uint64_t after = 0;
  if (auto a = r.query.find("after"); a != r.query.end()) {
    auto [p, ec] = std::from_chars(a->second.data(), a->second.data() + a->second.size(), after);
    if (ec != std::errc() || p != a->second.data() + a->second.size()) {
      throw Error(Errc::Malformed, "after must be an event id");
    }
  }
  platform_.settle();
  json events = json::array();
  for (const auto& e : platform_.audit_log().events(after)) events.push_back(audit::to_json(e));
  json flags = json::array();
  for (const auto& f : platform_.audit_log().flags()) flags.push_back(audit::to_json(f));
  return {200, json{{"events", events}, {"flags", flags}}.dump()};
}

void Gateway::sweep_expired() {
  const auto now = platform_.clock().now_ms();
  std::vector<Session> expired;
  {
    std::lock_guard lock(mu_);
    for (auto it = sessions_.begin(); it != sessions_.end();) {
      if (it->second.expires_ts < now) {
        expired.push_back(it->second);
        by_token_.erase(it->second.credentials.token);
        it = sessions_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (const auto& s : expired) {
    try {
      platform_.runtime().remove_container(s.container);
    } catch (const Error&) {
    }
  }
}

std::optional<Session> Gateway::session(const std::string& session_id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) return std::nullopt;
  return it->second;
}

std::size_t Gateway::session_count() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

int Gateway::bind(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos) throw Error(Errc::BindFailure, "address must be host:port");
  const std::string host = address.substr(0, colon);
  int port = 0;
  const auto p = address.substr(colon + 1);
  auto [end, ec] = std::from_chars(p.data(), p.data() + p.size(), port);
  if (ec != std::errc() || end != p.data() + p.size()) {
    throw Error(Errc::BindFailure, "bad port '" + p + "'");
  }

  server_ = std::make_unique<Server>();
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    HttpRequest r;
    r.method = req.method;
    r.path = req.path;
    r.body = req.body;
    for (const auto& [k, v] : req.params) r.query.emplace(k, v);
    for (const auto& [k, v] : req.headers) {
      std::string key = k;
      for (auto& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      r.headers[key] = v;
    }
    HttpResponse out;
    try {
      out = handle(r);
    } catch (const std::exception& e) {
      out = {500, json{{"code", "Internal"}, {"reason", e.what()}}.dump()};
    }
    res.status = out.status;
    res.set_content(out.body, out.content_type);
  };
  // httplib's default also sets SO_REUSEPORT, which lets a second server
  // silently share a busy port.
  server_->http.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  server_->http.Get(".*", handler);
  server_->http.Post(".*", handler);
  server_->http.Put(".*", handler);
  server_->http.Delete(".*", handler);

  if (port == 0) {
    port = server_->http.bind_to_any_port(host);
    if (port < 0) throw Error(Errc::BindFailure, "cannot bind " + address);
  } else if (!server_->http.bind_to_port(host, port)) {
    throw Error(Errc::BindFailure, "cannot bind " + address);
  }
  return port;
}

void Gateway::listen() {
  if (!server_) throw Error(Errc::BindFailure, "listen before bind");
  server_->http.listen_after_bind();
}

void Gateway::stop() {
  if (server_) server_->http.stop();
}

}  // namespace imobe
