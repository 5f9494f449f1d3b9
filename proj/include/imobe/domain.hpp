#pragma once

// Outcome-based education curriculum model and attainment computations.
//
// Attainment is the normalized weighted mean of item fractions per course
// outcome (CO). A student with no score on a mapped item counts as 0 for
// that item. Program outcomes (PO) receive the unweighted mean of the CO
// values that reach them through an exit outcome.
//
// Every function here is pure; none of them touch shared state.

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace imobe::domain {

inline constexpr double kDefaultThreshold = 0.5;

enum class OutcomeLevel { Unit, Lesson, Course, Exit, Program };

std::string_view to_string(OutcomeLevel level);
OutcomeLevel outcome_level_from_string(std::string_view name);

struct OutcomeNode {
  std::string id;
  OutcomeLevel level = OutcomeLevel::Unit;
  std::string description;
  std::vector<std::string> parent_ids;

  bool operator==(const OutcomeNode&) const = default;
};

enum class AssessmentKind { Test, Assignment, Presentation, Project };

std::string_view to_string(AssessmentKind kind);
AssessmentKind assessment_kind_from_string(std::string_view name);

struct AssessmentItem {
  std::string id;
  std::string course_id;
  AssessmentKind kind = AssessmentKind::Test;
  double max_marks = 0.0;
  // CO id -> non-negative weight.
  std::map<std::string, double> co_weights;

  bool operator==(const AssessmentItem&) const = default;
};

struct Score {
  std::string student_id;
  std::string item_id;
  double raw = 0.0;

  bool operator==(const Score&) const = default;
};

struct CohortStat {
  double mean = 0.0;
  double fraction_above_threshold = 0.0;

  bool operator==(const CohortStat&) const = default;
};

struct AttainmentReport {
  std::string course_id;
  // student id -> CO id -> attainment
  std::map<std::string, std::map<std::string, double>> per_student;
  std::map<std::string, CohortStat> cohort;
  std::map<std::string, double> po_rollup;
  double threshold = kDefaultThreshold;

  bool operator==(const AttainmentReport&) const = default;
};

// Single-student slice returned for StudentResult requests.
struct StudentResult {
  std::string course_id;
  std::string student_id;
  std::map<std::string, double> co_attainment;
  double threshold = kDefaultThreshold;

  bool operator==(const StudentResult&) const = default;
};

struct ItemBreakdown {
  std::string course_id;
  std::string item_id;
  std::map<std::string, double> per_student;
  double mean = 0.0;

  bool operator==(const ItemBreakdown&) const = default;
};

struct Violation {
  enum class Kind { LevelSkip, Cycle, Orphan, DanglingParent, DuplicateId };
  Kind kind;
  std::string node_id;
  std::string message;

  bool operator==(const Violation&) const = default;
};

using ValidationReport = std::vector<Violation>;

// Type invariants. Each throws Error(ValidationFailure) naming the field.
void check_item(const AssessmentItem& item);
void check_score(const Score& score, const AssessmentItem& item);

ValidationReport validate_hierarchy(const std::vector<OutcomeNode>& nodes);

double item_attainment(const Score& score, const AssessmentItem& item);

// `student_scores` are the scores of one student.
double co_attainment(const std::vector<Score>& student_scores,
                     const std::vector<AssessmentItem>& items,
                     const std::string& co);

CohortStat cohort_attainment(const std::vector<Score>& all_scores,
                             const std::vector<AssessmentItem>& items,
                             const std::string& co, double threshold);

std::map<std::string, double> po_rollup(
    const std::map<std::string, double>& co_values,
    const std::vector<OutcomeNode>& hierarchy);

AttainmentReport build_report(const std::string& course_id,
                              const std::vector<Score>& scores,
                              const std::vector<AssessmentItem>& items,
                              const std::vector<OutcomeNode>& hierarchy,
                              double threshold = kDefaultThreshold);

StudentResult build_student_result(const std::string& course_id,
                                   const std::string& student_id,
                                   const std::vector<Score>& scores,
                                   const std::vector<AssessmentItem>& items,
                                   double threshold = kDefaultThreshold);

ItemBreakdown build_item_breakdown(const std::string& course_id,
                                   const std::string& item_id,
                                   const std::vector<Score>& scores,
                                   const std::vector<AssessmentItem>& items);

// JSON mapping. Parsers throw Error(Malformed) on schema violations and
// Error(ValidationFailure) on type-invariant violations.
nlohmann::json to_json(const OutcomeNode& node);
nlohmann::json to_json(const AssessmentItem& item);
nlohmann::json to_json(const Score& score, const std::string& course_id);
nlohmann::json to_json(const AttainmentReport& report);
nlohmann::json to_json(const StudentResult& result);
nlohmann::json to_json(const ItemBreakdown& breakdown);
nlohmann::json to_json(const ValidationReport& report);

OutcomeNode outcome_from_json(const nlohmann::json& j);
AssessmentItem item_from_json(const nlohmann::json& j);
Score score_from_json(const nlohmann::json& j);
AttainmentReport report_from_json(const nlohmann::json& j);

}  // namespace imobe::domain
