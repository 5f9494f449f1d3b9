#pragma once

// The user interface agent's HTTP face: login and sessions, request intake,
// score ingestion, traces and the administrator endpoints. handle() is
// transport independent; serve() puts it behind an HTTP/1.1 listener.

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>

#include "imobe/platform.hpp"

namespace imobe {

struct HttpRequest {
  std::string method;
  std::string path;  // without the query string
  std::map<std::string, std::string> query;
  std::map<std::string, std::string> headers;  // lower-case names
  std::string body;
};

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

struct Session {
  std::string session_id;
  std::string principal;
  Role role = Role::Student;
  std::set<Role> roles;
  Credentials credentials;
  std::string container;
  std::string delegate;  // AA or SA agent id; empty for administrators
  TimestampMs created_ts = 0;
  TimestampMs expires_ts = 0;
};

// HTTP status for an error code surfacing from a request.
int http_status(Errc code);

class Gateway {
 public:
  explicit Gateway(Platform& platform);
  ~Gateway();

  HttpResponse handle(const HttpRequest& request);

  // Binds `address` ("host:port"); throws Error(BindFailure). Returns the
  // bound port (useful with port 0).
  int bind(const std::string& address);
  // Serves until stop() is called.
  void listen();
  void stop();

  std::optional<Session> session(const std::string& session_id) const;
  std::size_t session_count() const;

 private:
  HttpResponse login(const HttpRequest& r);
  HttpResponse assess(const Session& s, const nlohmann::json& body);
  HttpResponse import_scores(const Session& s, const std::string& csv);
  HttpResponse trace(const Session& s, const std::string& correlation_id);
  HttpResponse admin_users(const Session& s, const std::string& body);
  HttpResponse admin_audit(const Session& s, const HttpRequest& r);

  // Resolves the bearer token to its session; throws Error on failure.
  Session authenticate(const HttpRequest& r);
  HttpResponse error(int status, Errc code, const std::string& reason, const std::string& principal,
                     const std::string& correlation_id = {});
  HttpResponse error(int status, const std::string& code, const std::string& reason,
                     const std::string& principal, const std::string& correlation_id);
  void remember_request(const Session& s, const nlohmann::json& summary);
  void sweep_expired();

  Platform& platform_;
  mutable std::mutex mu_;
  std::map<std::string, Session> sessions_;         // by session id
  std::map<std::string, std::string> by_token_;     // token -> session id

  struct Server;
  std::unique_ptr<Server> server_;
};

}  // namespace imobe
