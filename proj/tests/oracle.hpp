#pragma once

// Brute-force attainment recomputation used as a test oracle. It works from
// flat rows and explicit edge lists and shares no code with imobe::domain.

#include <map>
#include <set>
#include <string>
#include <vector>

namespace oracle {

struct Row {
  std::string course_id, item_id, student_id;
  double raw;
};

struct Item {
  std::string id, course_id;
  double max_marks;
  std::map<std::string, double> weights;
};

// child -> parent pairs; level names as strings ("CO", "EO", "PO", ...).
struct Edge {
  std::string child, parent;
};

struct Report {
  std::map<std::string, std::map<std::string, double>> per_student;
  std::map<std::string, double> mean;
  std::map<std::string, double> fraction;
  std::map<std::string, double> po;
};

inline Report recompute(const std::string& course, const std::vector<Row>& rows,
                        const std::vector<Item>& items, const std::set<std::string>& exit_ids,
                        const std::set<std::string>& po_ids, const std::vector<Edge>& edges,
                        double threshold) {
  Report out;
  std::set<std::string> students;
  for (const auto& r : rows) {
    for (const auto& it : items) {
      if (it.id == r.item_id && it.course_id == course && r.course_id == course) {
        students.insert(r.student_id);
      }
    }
  }
  std::set<std::string> cos;
  for (const auto& it : items) {
    if (it.course_id != course) continue;
    for (const auto& [co, w] : it.weights) {
      if (w > 0) cos.insert(co);
    }
  }
  for (const auto& co : cos) {
    double total = 0;
    int above = 0;
    for (const auto& s : students) {
      double num = 0, den = 0;
      for (const auto& it : items) {
        if (it.course_id != course) continue;
        auto w = it.weights.count(co) ? it.weights.at(co) : 0.0;
        if (w <= 0) continue;
        double raw = 0;
        for (const auto& r : rows) {
          if (r.item_id == it.id && r.student_id == s) raw = r.raw;
        }
        num += w * raw / it.max_marks;
        den += w;
      }
      double v = num / den;
      out.per_student[s][co] = v;
      total += v;
      if (v >= threshold) ++above;
    }
    out.mean[co] = total / students.size();
    out.fraction[co] = double(above) / students.size();
  }
  for (const auto& po : po_ids) {
    double sum = 0;
    int n = 0;
    for (const auto& co : cos) {
      bool reaches = false;
      for (const auto& e1 : edges) {
        if (e1.child != co || !exit_ids.count(e1.parent)) continue;
        for (const auto& e2 : edges) {
          if (e2.child == e1.parent && e2.parent == po) reaches = true;
        }
      }
      if (reaches) {
        sum += out.mean[co];
        ++n;
      }
    }
    if (n > 0) out.po[po] = sum / n;
  }
  return out;
}

}  // namespace oracle
