#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "harmnet/data.hpp"
#include "harmnet/error.hpp"

namespace harmnet {

struct ConfusionCounts {
  int num_classes = 0;
  std::int64_t total = 0;
  std::vector<std::int64_t> tp, fp, fn, tn;
};

inline ConfusionCounts confusion(const std::vector<int>& pred,
                                 const std::vector<int>& truth,
                                 int num_classes = -1) {
  if (pred.size() != truth.size())
    throw ContractError("metrics: " + std::to_string(pred.size()) +
                        " predictions vs " + std::to_string(truth.size()) +
                        " labels");
  if (pred.empty()) throw ContractError("metrics: empty prediction list");
  int classes = num_classes;
  if (classes < 0) {
    for (std::size_t i = 0; i < pred.size(); ++i)
      classes = std::max({classes, pred[i] + 1, truth[i] + 1});
  }
  ConfusionCounts c;
  c.num_classes = classes;
  c.total = static_cast<std::int64_t>(pred.size());
  c.tp.assign(static_cast<std::size_t>(classes), 0);
  c.fp.assign(static_cast<std::size_t>(classes), 0);
  c.fn.assign(static_cast<std::size_t>(classes), 0);
  c.tn.assign(static_cast<std::size_t>(classes), 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || pred[i] >= classes || truth[i] < 0 || truth[i] >= classes)
      throw ContractError("metrics: class index outside [0," +
                          std::to_string(classes) + ")");
    for (int k = 0; k < classes; ++k) {
      const bool p = pred[i] == k, t = truth[i] == k;
      if (p && t)
        ++c.tp[static_cast<std::size_t>(k)];
      else if (p && !t)
        ++c.fp[static_cast<std::size_t>(k)];
      else if (!p && t)
        ++c.fn[static_cast<std::size_t>(k)];
      else
        ++c.tn[static_cast<std::size_t>(k)];
    }
  }
  return c;
}

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// 0/0 is defined as 0 throughout.
inline Prf prf1(const ConfusionCounts& c, int cls) {
  if (cls < 0 || cls >= c.num_classes)
    throw ContractError("metrics: class index out of range");
  const auto k = static_cast<std::size_t>(cls);
  const double tp = static_cast<double>(c.tp[k]);
  const double fp = static_cast<double>(c.fp[k]);
  const double fn = static_cast<double>(c.fn[k]);
  Prf r;
  r.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  r.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  r.f1 = r.precision + r.recall > 0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

// Mann-Whitney AUC by rank summation with midrank tie handling: the
// probability that a random positive outscores a random negative, ties 0.5.
inline double roc_auc(const std::vector<double>& scores,
                      const std::vector<int>& truth) {
  if (scores.size() != truth.size() || scores.empty())
    throw ContractError("metrics: roc_auc input size mismatch");
  std::int64_t pos = 0, neg = 0;
  for (int t : truth) {
    if (t == 1)
      ++pos;
    else if (t == 0)
      ++neg;
    else
      throw ContractError("metrics: roc_auc labels must be 0/1");
  }
  if (pos == 0 || neg == 0)
    throw MetricError("metrics: roc_auc undefined with a single class");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]])
      ++j;
    // 1-based midrank of the tied block [i, j]
    const double midrank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k)
      if (truth[order[k]] == 1) rank_sum_pos += midrank;
    i = j + 1;
  }
  const double p = static_cast<double>(pos);
  return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

struct ClassMetrics {
  std::string name;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;
};

struct EvalReport {
  std::vector<ClassMetrics> per_class;
  double accuracy = 0.0;
  double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
  double weighted_precision = 0.0, weighted_recall = 0.0, weighted_f1 = 0.0;
  bool has_auc = false;
  double auc = 0.0;
  bool has_harm_ratio = false;
  double harm_ratio = 0.0;
  std::int64_t support = 0;
  std::map<std::string, EvalReport> per_category;
};

// Scores are positive-class probabilities; pass empty (or a single-class
// group) to omit AUC.
inline EvalReport evaluate(const std::vector<int>& pred,
                           const std::vector<int>& truth,
                           const std::vector<std::string>& class_names,
                           const std::vector<double>& scores = {}) {
  ConfusionCounts c =
      confusion(pred, truth, static_cast<int>(class_names.size()));
  EvalReport r;
  r.support = c.total;
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == truth[i];
  r.accuracy = static_cast<double>(correct) / static_cast<double>(c.total);
  double wsum = 0.0;
  for (int k = 0; k < c.num_classes; ++k) {
    Prf p = prf1(c, k);
    ClassMetrics m;
    m.name = class_names[static_cast<std::size_t>(k)];
    m.precision = p.precision;
    m.recall = p.recall;
    m.f1 = p.f1;
    m.support = c.tp[static_cast<std::size_t>(k)] +
                c.fn[static_cast<std::size_t>(k)];
    r.per_class.push_back(m);
    r.macro_precision += p.precision;
    r.macro_recall += p.recall;
    r.macro_f1 += p.f1;
    const double w = static_cast<double>(m.support);
    r.weighted_precision += w * p.precision;
    r.weighted_recall += w * p.recall;
    r.weighted_f1 += w * p.f1;
    wsum += w;
  }
  const double nc = static_cast<double>(c.num_classes);
  r.macro_precision /= nc;
  r.macro_recall /= nc;
  r.macro_f1 /= nc;
  if (wsum > 0) {
    r.weighted_precision /= wsum;
    r.weighted_recall /= wsum;
    r.weighted_f1 /= wsum;
  }
  if (!scores.empty() && class_names.size() == 2) {
    bool both = false;
    for (std::size_t i = 1; i < truth.size() && !both; ++i)
      both = truth[i] != truth[0];
    if (both) {
      r.auc = roc_auc(scores, truth);
      r.has_auc = true;
    }
  }
  return r;
}

// Per-safety-category breakdown. Each group is scored independently and
// annotated with its harm-case ratio (severity codes E..I over all), the
// quantity the paper plots F-1 against.
inline std::map<std::string, EvalReport> per_category_report(
    const std::vector<Report>& reports, const std::vector<int>& pred,
    const std::vector<int>& truth,
    const std::vector<std::string>& class_names,
    const std::vector<double>& scores = {}) {
  if (reports.size() != pred.size() || reports.size() != truth.size())
    throw ContractError("metrics: per_category_report size mismatch");
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const std::string cat =
        reports[i].category.empty() ? "uncategorized" : reports[i].category;
    groups[cat].push_back(i);
  }
  std::map<std::string, EvalReport> out;
  for (const auto& [cat, idx] : groups) {
    std::vector<int> p, t;
    std::vector<double> s;
    std::int64_t harm = 0, labeled = 0;
    for (auto i : idx) {
      p.push_back(pred[i]);
      t.push_back(truth[i]);
      if (!scores.empty()) s.push_back(scores[i]);
      if (reports[i].labeled()) {
        ++labeled;
        harm += is_harm_code(reports[i].severity);
      }
    }
    EvalReport r = evaluate(p, t, class_names, s);
    if (labeled > 0) {
      r.harm_ratio = static_cast<double>(harm) / static_cast<double>(labeled);
      r.has_harm_ratio = true;
    }
    out.emplace(cat, std::move(r));
  }
  return out;
}

inline json eval_report_to_json(const EvalReport& r) {
  json per_class = json::array();
  for (const auto& m : r.per_class)
    per_class.push_back({{"class", m.name},
                         {"precision", m.precision},
                         {"recall", m.recall},
                         {"f1", m.f1},
                         {"support", m.support}});
  json j = {{"per_class", per_class},
            {"accuracy", r.accuracy},
            {"support", r.support},
            {"macro", {{"precision", r.macro_precision},
                       {"recall", r.macro_recall},
                       {"f1", r.macro_f1}}},
            {"weighted", {{"precision", r.weighted_precision},
                          {"recall", r.weighted_recall},
                          {"f1", r.weighted_f1}}}};
  if (r.has_auc) j["auc"] = r.auc;
  if (r.has_harm_ratio) j["harm_ratio"] = r.harm_ratio;
  if (!r.per_category.empty()) {
    json cats = json::object();
    for (const auto& [cat, sub] : r.per_category)
      cats[cat] = eval_report_to_json(sub);
    j["per_category"] = cats;
  }
  return j;
}

// Aligned plain-text table, columns ordered P, R, F-1, AUC.
inline std::string eval_report_to_text(const EvalReport& r,
                                       const std::string& title = "") {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  std::size_t width = 12;
  for (const auto& m : r.per_class) width = std::max(width, m.name.size() + 2);
  auto label = [&](const std::string& s) {
    os << std::left << std::setw(static_cast<int>(width)) << s << std::right;
  };
  if (!title.empty()) os << title << "\n";
  label("");
  os << std::setw(8) << "P" << std::setw(8) << "R" << std::setw(8) << "F-1"
     << std::setw(8) << "AUC" << "\n";
  for (std::size_t k = 0; k < r.per_class.size(); ++k) {
    const auto& m = r.per_class[k];
    label(m.name);
    os << std::setw(8) << m.precision << std::setw(8) << m.recall
       << std::setw(8) << m.f1;
    if (r.has_auc && k + 1 == r.per_class.size())
      os << std::setw(8) << r.auc;
    else
      os << std::setw(8) << "-";
    os << "\n";
  }
  label("macro_avg");
  os << std::setw(8) << r.macro_precision << std::setw(8) << r.macro_recall
     << std::setw(8) << r.macro_f1 << std::setw(8) << "-" << "\n";
  label("weighted_avg");
  os << std::setw(8) << r.weighted_precision << std::setw(8)
     << r.weighted_recall << std::setw(8) << r.weighted_f1 << std::setw(8)
     << "-" << "\n";
  label("accuracy");
  os << std::setw(8) << r.accuracy << "  (n=" << r.support << ")\n";
  if (r.has_harm_ratio) {
    label("harm_ratio");
    os << std::setw(8) << r.harm_ratio << "\n";
  }
  for (const auto& [cat, sub] : r.per_category) {
    os << "\n";
    os << eval_report_to_text(sub, "category: " + cat);
  }
  return os.str();
}

}  // namespace harmnet
