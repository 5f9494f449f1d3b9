#pragma once

// The canonical end-to-end scenario: one academician logs in and asks for a
// course report; the envelope trace of that request is compared with the
// canonical sequence. Faults can be injected to watch it diverge.

#include <string>
#include <string_view>
#include <vector>

#include "imobe/gateway.hpp"

namespace imobe::scenario {

enum class Fault { None, StoreRemoved, ForgedToken };

// "none" | "store-removed" | "forged-token"; throws Error(Usage).
Fault fault_from_string(std::string_view name);

struct Options {
  std::string principal = "lee";
  std::string secret = "lee-demo";
  std::string course_id = "CS101";
  Fault fault = Fault::None;
};

struct Outcome {
  std::vector<protocol::TraceStep> steps;
  // One printable line per envelope, numbered, with msg_id and ts.
  std::vector<std::string> lines;
  bool conforms = false;
  // First divergence from the canonical trace and what caused it; empty
  // when the trace conforms.
  std::string diagnosis;
  std::string correlation_id;
  int http_status = 0;
  nlohmann::json response;
};

// `platform` must run the deterministic scheduler over a seeded store.
// StoreRemoved needs a file-backed store.
Outcome run(Platform& platform, Gateway& gateway, const Options& options);

}  // namespace imobe::scenario
