#pragma once

// Small typed accessors over nlohmann::json that fail with a chosen error
// code instead of nlohmann's type_error.

#include <string>
#include <string_view>

#include "imobe/error.hpp"
#include "json.hpp"

namespace imobe::jsonutil {

inline const nlohmann::json& field(const nlohmann::json& j, std::string_view key,
                                   Errc missing = Errc::Malformed) {
  if (!j.is_object()) throw Error(Errc::Malformed, "expected a JSON object");
  auto it = j.find(key);
  if (it == j.end()) {
    throw Error(missing, "missing field '" + std::string(key) + "'");
  }
  return *it;
}

inline std::string get_string(const nlohmann::json& j, std::string_view key,
                              Errc missing = Errc::Malformed) {
  const auto& v = field(j, key, missing);
  if (!v.is_string()) {
    throw Error(Errc::Malformed, "field '" + std::string(key) + "' must be a string");
  }
  return v.get<std::string>();
}

inline double get_number(const nlohmann::json& j, std::string_view key,
                         Errc missing = Errc::Malformed) {
  const auto& v = field(j, key, missing);
  if (!v.is_number()) {
    throw Error(Errc::Malformed, "field '" + std::string(key) + "' must be a number");
  }
  return v.get<double>();
}

inline std::int64_t get_int(const nlohmann::json& j, std::string_view key,
                            Errc missing = Errc::Malformed) {
  const auto& v = field(j, key, missing);
  if (!v.is_number_integer()) {
    throw Error(Errc::Malformed, "field '" + std::string(key) + "' must be an integer");
  }
  return v.get<std::int64_t>();
}

inline std::string opt_string(const nlohmann::json& j, std::string_view key,
                              std::string fallback = {}) {
  if (!j.is_object()) return fallback;
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) return fallback;
  return it->get<std::string>();
}

}  // namespace imobe::jsonutil
