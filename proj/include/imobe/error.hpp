#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace imobe {

// Every failure the platform reports carries one of these codes. The names
// are part of the wire surface: they appear verbatim in ERROR payloads and
// HTTP error bodies.
enum class Errc {
  // obe-domain
  MismatchedItem,
  NoMappedItems,
  EmptyCohort,
  UnknownOutcome,
  UnknownItem,
  UnknownCourse,
  InvalidThreshold,
  ValidationFailure,
  Malformed,
  // authentication / authorization
  InvalidCredentials,
  ExpiredCredentials,
  UnknownPrincipal,
  AccountDisabled,
  Unauthorized,
  DuplicatePrincipal,
  // agent runtime
  DuplicateAgentId,
  NoSuchContainer,
  AgentUnknown,
  AgentTerminated,
  IllegalTransition,
  DigestMismatch,
  RouteForbidden,
  // protocol
  UnknownKind,
  MissingField,
  BadVersion,
  ProtocolViolation,
  Timeout,
  // behaviors
  UnsupportedScope,
  ScopeForbidden,
  StoreUnavailable,
  // store
  InvalidKeyPrefix,
  // process level
  BindFailure,
  StoreOpenFailure,
  Io,
  Usage,
};

std::string_view to_string(Errc code);
// Throws Error(Malformed) for unknown names.
Errc errc_from_string(std::string_view name);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code),
        detail_(detail) {}
  explicit Error(Errc code) : Error(code, std::string(to_string(code))) {}

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

}  // namespace imobe
