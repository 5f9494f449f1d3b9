#include "imobe/error.hpp"

#include <array>
#include <utility>

namespace imobe {

namespace {

constexpr std::array<std::pair<Errc, std::string_view>, 35> kNames{{
    {Errc::MismatchedItem, "MismatchedItem"},
    {Errc::NoMappedItems, "NoMappedItems"},
    {Errc::EmptyCohort, "EmptyCohort"},
    {Errc::UnknownOutcome, "UnknownOutcome"},
    {Errc::UnknownItem, "UnknownItem"},
    {Errc::UnknownCourse, "UnknownCourse"},
    {Errc::InvalidThreshold, "InvalidThreshold"},
    {Errc::ValidationFailure, "ValidationFailure"},
    {Errc::Malformed, "Malformed"},
    {Errc::InvalidCredentials, "InvalidCredentials"},
    {Errc::ExpiredCredentials, "ExpiredCredentials"},
    {Errc::UnknownPrincipal, "UnknownPrincipal"},
    {Errc::AccountDisabled, "AccountDisabled"},
    {Errc::Unauthorized, "Unauthorized"},
    {Errc::DuplicatePrincipal, "DuplicatePrincipal"},
    {Errc::DuplicateAgentId, "DuplicateAgentId"},
    {Errc::NoSuchContainer, "NoSuchContainer"},
    {Errc::AgentUnknown, "AgentUnknown"},
    {Errc::AgentTerminated, "AgentTerminated"},
    {Errc::IllegalTransition, "IllegalTransition"},
    {Errc::DigestMismatch, "DigestMismatch"},
    {Errc::RouteForbidden, "RouteForbidden"},
    {Errc::UnknownKind, "UnknownKind"},
    {Errc::MissingField, "MissingField"},
    {Errc::BadVersion, "BadVersion"},
    {Errc::ProtocolViolation, "ProtocolViolation"},
    {Errc::Timeout, "Timeout"},
    {Errc::UnsupportedScope, "UnsupportedScope"},
    {Errc::ScopeForbidden, "ScopeForbidden"},
    {Errc::StoreUnavailable, "StoreUnavailable"},
    {Errc::InvalidKeyPrefix, "InvalidKeyPrefix"},
    {Errc::BindFailure, "BindFailure"},
    {Errc::StoreOpenFailure, "StoreOpenFailure"},
    {Errc::Io, "Io"},
    {Errc::Usage, "Usage"},
}};

}  // namespace

std::string_view to_string(Errc code) {
  for (const auto& [c, name] : kNames) {
    if (c == code) return name;
  }
  return "Unknown";
}

Errc errc_from_string(std::string_view name) {
  for (const auto& [c, n] : kNames) {
    if (n == name) return c;
  }
  throw Error(Errc::Malformed, "unknown error code '" + std::string(name) + "'");
}

}  // namespace imobe
