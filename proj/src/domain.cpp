#include "imobe/domain.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <set>
#include <unordered_map>

#include "imobe/error.hpp"
#include "imobe/json_util.hpp"

namespace imobe::domain {

using nlohmann::json;

std::string_view to_string(OutcomeLevel level) {
  switch (level) {
    case OutcomeLevel::Unit: return "UnitOutcome";
    case OutcomeLevel::Lesson: return "LessonOutcome";
    case OutcomeLevel::Course: return "CourseOutcome";
    case OutcomeLevel::Exit: return "ExitOutcome";
    case OutcomeLevel::Program: return "ProgramOutcome";
  }
  return "?";
}

OutcomeLevel outcome_level_from_string(std::string_view name) {
  for (auto level : {OutcomeLevel::Unit, OutcomeLevel::Lesson, OutcomeLevel::Course,
                     OutcomeLevel::Exit, OutcomeLevel::Program}) {
    if (to_string(level) == name) return level;
  }
  throw Error(Errc::Malformed, "unknown outcome level '" + std::string(name) + "'");
}

std::string_view to_string(AssessmentKind kind) {
  switch (kind) {
    case AssessmentKind::Test: return "Test";
    case AssessmentKind::Assignment: return "Assignment";
    case AssessmentKind::Presentation: return "Presentation";
    case AssessmentKind::Project: return "Project";
  }
  return "?";
}

AssessmentKind assessment_kind_from_string(std::string_view name) {
  for (auto kind : {AssessmentKind::Test, AssessmentKind::Assignment,
                    AssessmentKind::Presentation, AssessmentKind::Project}) {
    if (to_string(kind) == name) return kind;
  }
  throw Error(Errc::Malformed, "unknown assessment kind '" + std::string(name) + "'");
}

void check_item(const AssessmentItem& item) {
  if (item.id.empty()) throw Error(Errc::ValidationFailure, "item id is empty");
  if (!(item.max_marks > 0.0) || !std::isfinite(item.max_marks)) {
    throw Error(Errc::ValidationFailure, "item " + item.id + ": max_marks must be > 0");
  }
  bool any_positive = false;
  for (const auto& [co, w] : item.co_weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw Error(Errc::ValidationFailure,
                  "item " + item.id + ": weight for " + co + " must be non-negative");
    }
    any_positive = any_positive || w > 0.0;
  }
  if (!any_positive) {
    throw Error(Errc::ValidationFailure, "item " + item.id + ": no positive co_weight");
  }
}

void check_score(const Score& score, const AssessmentItem& item) {
  if (score.item_id != item.id) {
    throw Error(Errc::MismatchedItem, "score for " + score.item_id + " checked against " + item.id);
  }
  if (!(score.raw >= 0.0 && score.raw <= item.max_marks)) {
    throw Error(Errc::ValidationFailure, "score of " + score.student_id + " on " + item.id +
                                             " outside [0, max_marks]");
  }
}

ValidationReport validate_hierarchy(const std::vector<OutcomeNode>& nodes) {
  ValidationReport out;
  std::map<std::string, const OutcomeNode*> by_id;
  for (const auto& node : nodes) {
    if (!by_id.emplace(node.id, &node).second) {
      out.push_back({Violation::Kind::DuplicateId, node.id, "duplicate id " + node.id});
    }
  }

  for (const auto& node : nodes) {
    if (node.level != OutcomeLevel::Program && node.parent_ids.empty()) {
      out.push_back({Violation::Kind::Orphan, node.id,
                     "orphan " + std::string(to_string(node.level)) + " " + node.id});
    }
    for (const auto& pid : node.parent_ids) {
      auto it = by_id.find(pid);
      if (it == by_id.end()) {
        out.push_back({Violation::Kind::DanglingParent, node.id,
                       "dangling parent " + pid + " of " + node.id});
        continue;
      }
      if (static_cast<int>(it->second->level) != static_cast<int>(node.level) + 1) {
        out.push_back({Violation::Kind::LevelSkip, node.id,
                       "level skip " + std::string(to_string(node.level)) + "→" +
                           std::string(to_string(it->second->level))});
      }
    }
  }

  // Cycles along parent edges. Each cycle is reported once, keyed by its
  // node set.
  enum class Mark { White, Grey, Black };
  std::map<std::string, Mark> mark;
  for (const auto& [id, _] : by_id) mark[id] = Mark::White;
  std::set<std::set<std::string>> seen_cycles;
  std::vector<std::string> stack;
  std::function<void(const std::string&)> visit = [&](const std::string& id) {
    mark[id] = Mark::Grey;
    stack.push_back(id);
    for (const auto& pid : by_id.at(id)->parent_ids) {
      if (!by_id.count(pid)) continue;
      if (mark[pid] == Mark::Grey) {
        auto from = std::find(stack.begin(), stack.end(), pid);
        std::set<std::string> members(from, stack.end());
        if (seen_cycles.insert(members).second) {
          std::string path;
          for (auto it = from; it != stack.end(); ++it) path += *it + "→";
          path += pid;
          out.push_back({Violation::Kind::Cycle, pid, "cycle " + path});
        }
      } else if (mark[pid] == Mark::White) {
        visit(pid);
      }
    }
    stack.pop_back();
    mark[id] = Mark::Black;
  };
  for (const auto& [id, _] : by_id) {
    if (mark[id] == Mark::White) visit(id);
  }
  return out;
}

double item_attainment(const Score& score, const AssessmentItem& item) {
  check_score(score, item);
  return score.raw / item.max_marks;
}

namespace {

void check_threshold(double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw Error(Errc::InvalidThreshold, "threshold must lie in (0,1)");
  }
}

// Items sorted by id so that every summation runs in a fixed order.
std::vector<const AssessmentItem*> sorted_items(const std::vector<AssessmentItem>& items) {
  std::vector<const AssessmentItem*> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(&item);
  std::sort(out.begin(), out.end(),
            [](const auto* a, const auto* b) { return a->id < b->id; });
  return out;
}

// student -> item -> raw, restricted to the given items.
using ScoreTable = std::map<std::string, std::map<std::string, double>>;

ScoreTable tabulate(const std::vector<Score>& scores, const std::vector<AssessmentItem>& items,
                    bool ignore_foreign) {
  std::unordered_map<std::string, const AssessmentItem*> by_id;
  for (const auto& item : items) by_id.emplace(item.id, &item);
  ScoreTable table;
  for (const auto& s : scores) {
    auto it = by_id.find(s.item_id);
    if (it == by_id.end()) {
      if (ignore_foreign) continue;
      throw Error(Errc::UnknownItem, "score references unknown item " + s.item_id);
    }
    check_score(s, *it->second);
    if (!table[s.student_id].emplace(s.item_id, s.raw).second) {
      throw Error(Errc::ValidationFailure,
                  "duplicate score for " + s.student_id + " on " + s.item_id);
    }
  }
  return table;
}

double weighted_attainment(const std::map<std::string, double>& raw_by_item,
                           const std::vector<const AssessmentItem*>& items,
                           const std::string& co) {
  double num = 0.0;
  double den = 0.0;
  for (const auto* item : items) {
    auto w = item->co_weights.find(co);
    if (w == item->co_weights.end() || !(w->second > 0.0)) continue;
    auto r = raw_by_item.find(item->id);
    const double fraction = r == raw_by_item.end() ? 0.0 : r->second / item->max_marks;
    num += w->second * fraction;
    den += w->second;
  }
  if (!(den > 0.0)) throw Error(Errc::NoMappedItems, "no item weights " + co);
  return std::clamp(num / den, 0.0, 1.0);
}

std::vector<AssessmentItem> course_items(const std::string& course_id,
                                         const std::vector<AssessmentItem>& items) {
  std::vector<AssessmentItem> out;
  for (const auto& item : items) {
    if (item.course_id == course_id) out.push_back(item);
  }
  if (out.empty()) throw Error(Errc::UnknownCourse, "no assessment items for course " + course_id);
  return out;
}

std::set<std::string> mapped_cos(const std::vector<AssessmentItem>& items) {
  std::set<std::string> cos;
  for (const auto& item : items) {
    for (const auto& [co, w] : item.co_weights) {
      if (w > 0.0) cos.insert(co);
    }
  }
  return cos;
}

}  // namespace

double co_attainment(const std::vector<Score>& student_scores,
                     const std::vector<AssessmentItem>& items, const std::string& co) {
  ScoreTable table = tabulate(student_scores, items, false);
  if (table.size() > 1) {
    throw Error(Errc::ValidationFailure, "co_attainment expects the scores of one student");
  }
  const std::map<std::string, double> empty;
  return weighted_attainment(table.empty() ? empty : table.begin()->second,
                             sorted_items(items), co);
}

CohortStat cohort_attainment(const std::vector<Score>& all_scores,
                             const std::vector<AssessmentItem>& items, const std::string& co,
                             double threshold) {
  check_threshold(threshold);
  ScoreTable table = tabulate(all_scores, items, false);
  if (table.empty()) throw Error(Errc::EmptyCohort, "no student has a score");
  const auto ordered = sorted_items(items);
  double sum = 0.0;
  std::size_t above = 0;
  for (const auto& [student, raw] : table) {
    const double v = weighted_attainment(raw, ordered, co);
    sum += v;
    if (v >= threshold) ++above;
  }
  const auto n = static_cast<double>(table.size());
  return {std::clamp(sum / n, 0.0, 1.0), static_cast<double>(above) / n};
}

std::map<std::string, double> po_rollup(const std::map<std::string, double>& co_values,
                                        const std::vector<OutcomeNode>& hierarchy) {
  std::map<std::string, const OutcomeNode*> by_id;
  for (const auto& node : hierarchy) by_id.emplace(node.id, &node);

  std::map<std::string, std::pair<double, int>> acc;
  for (const auto& [co, value] : co_values) {
    auto it = by_id.find(co);
    if (it == by_id.end()) throw Error(Errc::UnknownOutcome, "unknown outcome " + co);

    // Walk upward; a PO counts only when reached from an exit outcome.
    std::set<std::string> reached;
    std::set<std::string> visited{co};
    std::deque<const OutcomeNode*> frontier{it->second};
    while (!frontier.empty()) {
      const OutcomeNode* node = frontier.front();
      frontier.pop_front();
      for (const auto& pid : node->parent_ids) {
        auto p = by_id.find(pid);
        if (p == by_id.end() || !visited.insert(pid).second) continue;
        if (p->second->level == OutcomeLevel::Program) {
          if (node->level == OutcomeLevel::Exit) reached.insert(pid);
        } else {
          frontier.push_back(p->second);
        }
      }
    }
    for (const auto& po : reached) {
      auto& [sum, count] = acc[po];
      sum += value;
      ++count;
    }
  }

  std::map<std::string, double> out;
  for (const auto& [po, sc] : acc) out[po] = std::clamp(sc.first / sc.second, 0.0, 1.0);
  return out;
}

AttainmentReport build_report(const std::string& course_id, const std::vector<Score>& scores,
                              const std::vector<AssessmentItem>& items,
                              const std::vector<OutcomeNode>& hierarchy, double threshold) {
  check_threshold(threshold);
  if (auto violations = validate_hierarchy(hierarchy); !violations.empty()) {
    throw Error(Errc::ValidationFailure, violations.front().message);
  }
  const auto own_items = course_items(course_id, items);
  for (const auto& item : own_items) check_item(item);

  const ScoreTable table = tabulate(scores, own_items, true);
  if (table.empty()) throw Error(Errc::EmptyCohort, "no scores for course " + course_id);

  const auto ordered = sorted_items(own_items);
  AttainmentReport report;
  report.course_id = course_id;
  report.threshold = threshold;
  for (const auto& co : mapped_cos(own_items)) {
    double sum = 0.0;
    std::size_t above = 0;
    for (const auto& [student, raw] : table) {
      const double v = weighted_attainment(raw, ordered, co);
      report.per_student[student][co] = v;
      sum += v;
      if (v >= threshold) ++above;
    }
    const auto n = static_cast<double>(table.size());
    report.cohort[co] = {std::clamp(sum / n, 0.0, 1.0), static_cast<double>(above) / n};
  }

  std::map<std::string, double> means;
  for (const auto& [co, stat] : report.cohort) means[co] = stat.mean;
  report.po_rollup = po_rollup(means, hierarchy);
  return report;
}

StudentResult build_student_result(const std::string& course_id, const std::string& student_id,
                                   const std::vector<Score>& scores,
                                   const std::vector<AssessmentItem>& items, double threshold) {
  check_threshold(threshold);
  const auto own_items = course_items(course_id, items);
  for (const auto& item : own_items) check_item(item);
  const ScoreTable table = tabulate(scores, own_items, true);
  auto it = table.find(student_id);
  if (it == table.end()) {
    throw Error(Errc::EmptyCohort, "no scores for " + student_id + " in " + course_id);
  }
  StudentResult result{course_id, student_id, {}, threshold};
  const auto ordered = sorted_items(own_items);
  for (const auto& co : mapped_cos(own_items)) {
    result.co_attainment[co] = weighted_attainment(it->second, ordered, co);
  }
  return result;
}

ItemBreakdown build_item_breakdown(const std::string& course_id, const std::string& item_id,
                                   const std::vector<Score>& scores,
                                   const std::vector<AssessmentItem>& items) {
  const auto own_items = course_items(course_id, items);
  auto item = std::find_if(own_items.begin(), own_items.end(),
                           [&](const auto& i) { return i.id == item_id; });
  if (item == own_items.end()) {
    throw Error(Errc::UnknownItem, "item " + item_id + " not in course " + course_id);
  }
  check_item(*item);
  const ScoreTable table = tabulate(scores, own_items, true);
  if (table.empty()) throw Error(Errc::EmptyCohort, "no scores for course " + course_id);

  ItemBreakdown out{course_id, item_id, {}, 0.0};
  double sum = 0.0;
  for (const auto& [student, raw] : table) {
    auto r = raw.find(item_id);
    const double v = r == raw.end() ? 0.0 : r->second / item->max_marks;
    out.per_student[student] = v;
    sum += v;
  }
  out.mean = sum / static_cast<double>(table.size());
  return out;
}

// ---------------------------------------------------------------------------
// JSON

json to_json(const OutcomeNode& node) {
  return {{"id", node.id},
          {"level", to_string(node.level)},
          {"description", node.description},
          {"parent_ids", node.parent_ids}};
}

json to_json(const AssessmentItem& item) {
  return {{"id", item.id},
          {"course_id", item.course_id},
          {"kind", to_string(item.kind)},
          {"max_marks", item.max_marks},
          {"co_weights", item.co_weights}};
}

json to_json(const Score& score, const std::string& course_id) {
  return {{"student_id", score.student_id},
          {"item_id", score.item_id},
          {"course_id", course_id},
          {"raw", score.raw}};
}

json to_json(const AttainmentReport& report) {
  json cohort = json::object();
  for (const auto& [co, stat] : report.cohort) {
    cohort[co] = {{"mean", stat.mean}, {"fraction_above_threshold", stat.fraction_above_threshold}};
  }
  json per_student = json::object();
  for (const auto& [student, values] : report.per_student) per_student[student] = values;
  return {{"course_id", report.course_id},
          {"threshold", report.threshold},
          {"per_student", per_student},
          {"cohort", cohort},
          {"po_rollup", report.po_rollup.empty() ? json::object() : json(report.po_rollup)}};
}

json to_json(const StudentResult& result) {
  return {{"course_id", result.course_id},
          {"student_id", result.student_id},
          {"threshold", result.threshold},
          {"co_attainment", result.co_attainment.empty() ? json::object()
                                                         : json(result.co_attainment)}};
}

json to_json(const ItemBreakdown& breakdown) {
  return {{"course_id", breakdown.course_id},
          {"item_id", breakdown.item_id},
          {"mean", breakdown.mean},
          {"per_student", breakdown.per_student.empty() ? json::object()
                                                        : json(breakdown.per_student)}};
}

namespace {

std::string_view to_string(Violation::Kind kind) {
  switch (kind) {
    case Violation::Kind::LevelSkip: return "LevelSkip";
    case Violation::Kind::Cycle: return "Cycle";
    case Violation::Kind::Orphan: return "Orphan";
    case Violation::Kind::DanglingParent: return "DanglingParent";
    case Violation::Kind::DuplicateId: return "DuplicateId";
  }
  return "?";
}

}  // namespace

json to_json(const ValidationReport& report) {
  json out = json::array();
  for (const auto& v : report) {
    out.push_back({{"kind", to_string(v.kind)}, {"node_id", v.node_id}, {"message", v.message}});
  }
  return out;
}

OutcomeNode outcome_from_json(const json& j) {
  OutcomeNode node;
  node.id = jsonutil::get_string(j, "id");
  node.level = outcome_level_from_string(jsonutil::get_string(j, "level"));
  node.description = jsonutil::opt_string(j, "description");
  if (auto it = j.find("parent_ids"); it != j.end()) {
    if (!it->is_array()) throw Error(Errc::Malformed, "parent_ids must be an array");
    for (const auto& p : *it) {
      if (!p.is_string()) throw Error(Errc::Malformed, "parent id must be a string");
      node.parent_ids.push_back(p.get<std::string>());
    }
  }
  if (node.id.empty()) throw Error(Errc::ValidationFailure, "outcome id is empty");
  return node;
}

AssessmentItem item_from_json(const json& j) {
  AssessmentItem item;
  item.id = jsonutil::get_string(j, "id");
  item.course_id = jsonutil::get_string(j, "course_id");
  item.kind = assessment_kind_from_string(jsonutil::get_string(j, "kind"));
  item.max_marks = jsonutil::get_number(j, "max_marks");
  const auto& weights = jsonutil::field(j, "co_weights");
  if (!weights.is_object()) throw Error(Errc::Malformed, "co_weights must be an object");
  for (const auto& [co, w] : weights.items()) {
    if (!w.is_number()) throw Error(Errc::Malformed, "weight for " + co + " must be a number");
    item.co_weights[co] = w.get<double>();
  }
  check_item(item);
  return item;
}

Score score_from_json(const json& j) {
  Score s;
  s.student_id = jsonutil::get_string(j, "student_id");
  s.item_id = jsonutil::get_string(j, "item_id");
  s.raw = jsonutil::get_number(j, "raw");
  return s;
}

AttainmentReport report_from_json(const json& j) {
  AttainmentReport r;
  r.course_id = jsonutil::get_string(j, "course_id");
  r.threshold = jsonutil::get_number(j, "threshold");
  for (const auto& [student, values] : jsonutil::field(j, "per_student").items()) {
    for (const auto& [co, v] : values.items()) r.per_student[student][co] = v.get<double>();
  }
  for (const auto& [co, stat] : jsonutil::field(j, "cohort").items()) {
    r.cohort[co] = {jsonutil::get_number(stat, "mean"),
                    jsonutil::get_number(stat, "fraction_above_threshold")};
  }
  for (const auto& [po, v] : jsonutil::field(j, "po_rollup").items()) {
    r.po_rollup[po] = v.get<double>();
  }
  return r;
}

}  // namespace imobe::domain
