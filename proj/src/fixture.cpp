#include "imobe/fixture.hpp"

#include <fstream>
#include <sstream>

#include "imobe/error.hpp"
#include "imobe/json_util.hpp"

namespace imobe::fixture {

using nlohmann::json;

json to_json(const SeedCounts& c) {
  return {{"outcomes", c.outcomes}, {"items", c.items}, {"users", c.users}, {"scores", c.scores}};
}

namespace {

const json& list(const json& fixture, const char* key) {
  static const json empty = json::array();
  auto it = fixture.find(key);
  if (it == fixture.end()) return empty;
  if (!it->is_array()) throw Error(Errc::ValidationFailure, std::string(key) + ": must be an array");
  return *it;
}

template <typename F>
auto at_path(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(Errc::ValidationFailure, path + ": " + e.detail());
  }
}

}  // namespace

SeedCounts seed(store::Store& store, const json& fixture, const Credentials& writer) {
  if (!fixture.is_object()) throw Error(Errc::ValidationFailure, "fixture: must be a JSON object");

  std::vector<domain::OutcomeNode> outcomes;
  const auto& o = list(fixture, "outcomes");
  for (std::size_t i = 0; i < o.size(); ++i) {
    outcomes.push_back(at_path("outcomes[" + std::to_string(i) + "]",
                               [&] { return domain::outcome_from_json(o[i]); }));
  }
  if (auto v = domain::validate_hierarchy(outcomes); !v.empty()) {
    throw Error(Errc::ValidationFailure, "outcomes: " + v.front().message);
  }

  std::vector<domain::AssessmentItem> items;
  std::map<std::string, domain::AssessmentItem> by_id;
  const auto& it = list(fixture, "items");
  for (std::size_t i = 0; i < it.size(); ++i) {
    const std::string path = "items[" + std::to_string(i) + "]";
    for (const char* field : {"id", "course_id", "kind", "max_marks", "co_weights"}) {
      if (it[i].is_object() && !it[i].contains(field)) {
        throw Error(Errc::ValidationFailure, path + "." + field + ": missing");
      }
    }
    if (it[i].is_object() && it[i]["max_marks"].is_number() && !(it[i]["max_marks"].get<double>() > 0)) {
      throw Error(Errc::ValidationFailure, path + ".max_marks: must be > 0");
    }
    items.push_back(at_path(path, [&] { return domain::item_from_json(it[i]); }));
    by_id[items.back().id] = items.back();
  }

  struct UserSpec {
    std::string principal, secret;
    std::set<Role> roles;
    bool enabled;
  };
  std::vector<UserSpec> users;
  const auto& u = list(fixture, "users");
  for (std::size_t i = 0; i < u.size(); ++i) {
    users.push_back(at_path("users[" + std::to_string(i) + "]", [&] {
      UserSpec spec{jsonutil::get_string(u[i], "principal"), jsonutil::get_string(u[i], "secret"),
                    {}, u[i].value("enabled", true)};
      for (const auto& r : jsonutil::field(u[i], "roles")) {
        spec.roles.insert(role_from_string(r.get<std::string>()));
      }
      if (spec.roles.empty() || spec.roles.count(Role::System)) {
        throw Error(Errc::ValidationFailure, "roles must be non-empty account roles");
      }
      return spec;
    }));
  }

  std::vector<std::pair<domain::Score, std::string>> scores;
  const auto& s = list(fixture, "scores");
  for (std::size_t i = 0; i < s.size(); ++i) {
    scores.push_back(at_path("scores[" + std::to_string(i) + "]", [&] {
      auto score = domain::score_from_json(s[i]);
      auto item = by_id.find(score.item_id);
      if (item == by_id.end()) throw Error(Errc::ValidationFailure, "unknown item " + score.item_id);
      domain::check_score(score, item->second);
      return std::pair{score, item->second.course_id};
    }));
  }

  SeedCounts counts;
  for (const auto& n : outcomes) {
    store.put(store::outcome_key(n.id), domain::to_json(n), writer);
    ++counts.outcomes;
  }
  for (const auto& i : items) {
    store.put(store::item_key(i.id), domain::to_json(i), writer);
    ++counts.items;
  }
  for (const auto& spec : users) {
    auto profile = store::make_user(spec.principal, spec.secret, spec.roles, spec.enabled);
    store.put(store::user_key(spec.principal), store::to_json(profile), writer);
    ++counts.users;
  }
  for (const auto& [score, course] : scores) {
    store.put(store::score_key(score.item_id, score.student_id), domain::to_json(score, course),
              writer);
    ++counts.scores;
  }
  return counts;
}

json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  json j = json::parse(ss.str(), nullptr, false);
  if (j.is_discarded()) throw Error(Errc::ValidationFailure, path.string() + ": not valid JSON");
  return j;
}

}  // namespace imobe::fixture
