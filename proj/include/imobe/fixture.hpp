#pragma once

// Loading curriculum fixtures ({outcomes, items, users, scores}) into a
// store. Seeding is idempotent in content: re-seeding the same file bumps
// every version by one and yields the same counts.

#include <filesystem>
#include <string>

#include "imobe/store.hpp"
#include "json.hpp"

namespace imobe::fixture {

struct SeedCounts {
  std::size_t outcomes = 0;
  std::size_t items = 0;
  std::size_t users = 0;
  std::size_t scores = 0;

  bool operator==(const SeedCounts&) const = default;
};

nlohmann::json to_json(const SeedCounts& c);

// Validates the whole fixture before writing anything. Throws
// Error(ValidationFailure) whose detail starts with the JSON path of the
// offending value, e.g. "items[2].max_marks".
SeedCounts seed(store::Store& store, const nlohmann::json& fixture, const Credentials& writer);

nlohmann::json load_json(const std::filesystem::path& path);

}  // namespace imobe::fixture
