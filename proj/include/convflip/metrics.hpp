#pragma once

#include <algorithm>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "convflip/dialogue.hpp"

namespace convflip {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long support = 0;
};

struct MetricsReport {
  std::vector<std::string> classes;
  std::vector<ClassMetrics> per_class;
  double weighted_f1 = 0.0;
  std::vector<std::vector<long>> confusion;  // rows = actual, columns = predicted
  std::optional<double> trigger_f1;          // positive-class F1, binary reports only
  long samples = 0;
};

// 0/0 cells use the convention precision = recall = f1 = 0.
inline double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

inline ClassMetrics metrics_from_counts(long tp, long fp, long fn) {
  ClassMetrics m;
  m.precision = safe_div(static_cast<double>(tp), static_cast<double>(tp + fp));
  m.recall = safe_div(static_cast<double>(tp), static_cast<double>(tp + fn));
  m.f1 = safe_div(2.0 * m.precision * m.recall, m.precision + m.recall);
  m.support = tp + fn;
  return m;
}

inline std::vector<std::vector<long>> confusion_matrix(const std::vector<int>& gold,
                                                       const std::vector<int>& pred,
                                                       int num_classes) {
  if (gold.size() != pred.size())
    throw std::invalid_argument("confusion_matrix: gold/pred length mismatch (" +
                                std::to_string(gold.size()) + " vs " + std::to_string(pred.size()) +
                                ")");
  std::vector<std::vector<long>> m(static_cast<std::size_t>(num_classes),
                                   std::vector<long>(static_cast<std::size_t>(num_classes), 0));
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] < 0 || gold[i] >= num_classes || pred[i] < 0 || pred[i] >= num_classes)
      throw std::invalid_argument("confusion_matrix: label out of range at sample " +
                                  std::to_string(i));
    ++m[static_cast<std::size_t>(gold[i])][static_cast<std::size_t>(pred[i])];
  }
  return m;
}

inline MetricsReport classification_report(const std::vector<int>& gold,
                                           const std::vector<int>& pred,
                                           std::vector<std::string> classes) {
  MetricsReport rep;
  rep.classes = std::move(classes);
  const int k = static_cast<int>(rep.classes.size());
  rep.confusion = confusion_matrix(gold, pred, k);
  rep.samples = static_cast<long>(gold.size());

  double f1_weighted_num = 0.0;
  long support_total = 0;
  for (int c = 0; c < k; ++c) {
    long tp = rep.confusion[c][c], fp = 0, fn = 0;
    for (int o = 0; o < k; ++o) {
      if (o == c) continue;
      fp += rep.confusion[o][c];
      fn += rep.confusion[c][o];
    }
    ClassMetrics m = metrics_from_counts(tp, fp, fn);
    f1_weighted_num += m.f1 * static_cast<double>(m.support);
    support_total += m.support;
    rep.per_class.push_back(m);
  }
  rep.weighted_f1 = safe_div(f1_weighted_num, static_cast<double>(support_total));
  if (k == 2) rep.trigger_f1 = rep.per_class[1].f1;
  return rep;
}

// Flatten gold and predicted trigger annotations into per-(target, candidate)
// binary decisions over the context window. Gold triggers outside the window
// become unrecoverable false negatives; predicted triggers outside it become
// false positives. A prediction for a (dialogue, target) pair absent from the
// gold set is an error.
inline MetricsReport efr_dialogue_report(
    const std::map<std::string, std::vector<TriggerAnnotation>>& gold,
    const std::map<std::string, std::vector<TriggerAnnotation>>& predicted, int window) {
  if (window < 1) throw std::invalid_argument("efr_dialogue_report: window must be >= 1");
  std::map<std::pair<std::string, int>, const TriggerAnnotation*> pred_index;
  for (const auto& [id, anns] : predicted)
    for (const auto& ann : anns) pred_index[{id, ann.target_index}] = &ann;

  std::map<std::pair<std::string, int>, bool> seen;
  for (const auto& [id, anns] : gold)
    for (const auto& ann : anns) seen[{id, ann.target_index}] = true;
  for (const auto& [key, ann] : pred_index)
    if (!seen.count(key))
      throw std::invalid_argument("prediction for unknown target (" + key.first + ", " +
                                  std::to_string(key.second) + ")");

  std::vector<int> g, p;
  for (const auto& [id, anns] : gold)
    for (const auto& ann : anns) {
      const int t = ann.target_index;
      const int first = std::max(1, t - window + 1);
      const TriggerAnnotation* pr = nullptr;
      if (auto it = pred_index.find({id, t}); it != pred_index.end()) pr = it->second;
      for (int k = first; k <= t; ++k) {
        g.push_back(ann.trigger_indices.count(k) ? 1 : 0);
        p.push_back(pr && pr->trigger_indices.count(k) ? 1 : 0);
      }
      for (int k : ann.trigger_indices)
        if (k < first) {  // dropped by windowing: counted as a miss
          g.push_back(1);
          p.push_back(0);
        }
      if (pr)
        for (int k : pr->trigger_indices)
          if (k < first || k > t) {  // spurious out-of-window prediction
            g.push_back(0);
            p.push_back(1);
          }
    }
  return classification_report(g, p, {"non-trigger", "trigger"});
}

inline nlohmann::ordered_json to_json(const MetricsReport& rep) {
  nlohmann::ordered_json j;
  j["samples"] = rep.samples;
  j["per_class"] = nlohmann::ordered_json::object();
  for (std::size_t c = 0; c < rep.classes.size(); ++c) {
    nlohmann::ordered_json m;
    m["precision"] = rep.per_class[c].precision;
    m["recall"] = rep.per_class[c].recall;
    m["f1"] = rep.per_class[c].f1;
    m["support"] = rep.per_class[c].support;
    j["per_class"][rep.classes[c]] = m;
  }
  j["weighted_f1"] = rep.weighted_f1;
  if (rep.trigger_f1) j["trigger_f1"] = *rep.trigger_f1;
  j["confusion"] = rep.confusion;
  return j;
}

inline std::string to_text(const MetricsReport& rep) {
  std::ostringstream out;
  std::size_t w = 12;
  for (const auto& c : rep.classes) w = std::max(w, c.size() + 2);
  out << std::left << std::setw(static_cast<int>(w)) << "class" << std::right << std::setw(11)
      << "precision" << std::setw(9) << "recall" << std::setw(9) << "f1" << std::setw(10)
      << "support" << "\n";
  out << std::fixed << std::setprecision(4);
  for (std::size_t c = 0; c < rep.classes.size(); ++c) {
    const auto& m = rep.per_class[c];
    out << std::left << std::setw(static_cast<int>(w)) << rep.classes[c] << std::right
        << std::setw(11) << m.precision << std::setw(9) << m.recall << std::setw(9) << m.f1
        << std::setw(10) << m.support << "\n";
  }
  out << std::left << std::setw(static_cast<int>(w)) << "weighted_f1" << std::right << std::setw(11)
      << rep.weighted_f1 << "\n";
  if (rep.trigger_f1)
    out << std::left << std::setw(static_cast<int>(w)) << "trigger_f1" << std::right
        << std::setw(11) << *rep.trigger_f1 << "\n";
  return out.str();
}

inline void write_confusion_csv(const MetricsReport& rep, std::ostream& out) {
  out << "actual\\predicted";
  for (const auto& c : rep.classes) out << "," << c;
  out << "\n";
  for (std::size_t r = 0; r < rep.classes.size(); ++r) {
    out << rep.classes[r];
    for (std::size_t c = 0; c < rep.classes.size(); ++c) out << "," << rep.confusion[r][c];
    out << "\n";
  }
}

inline std::vector<std::string> emotion_class_names() {
  std::vector<std::string> names;
  for (auto n : kEmotionNames) names.emplace_back(n);
  return names;
}

}  // namespace convflip
