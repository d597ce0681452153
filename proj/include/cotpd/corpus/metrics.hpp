#pragma once

#include <algorithm>
#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include "cotpd/corpus/sample.hpp"
#include "cotpd/error.hpp"

namespace cotpd {

struct F1Report {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  static F1Report from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
    F1Report r{0.0, 0.0, 0.0, tp, fp, fn};
    if (tp + fp > 0) r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    if (tp + fn > 0) r.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (r.precision + r.recall > 0)
      r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
    return r;
  }
  friend bool operator==(const F1Report&, const F1Report&) = default;
};

/// Micro-averaged exact-match (start, end, type) F1 over aligned samples.
inline F1Report span_f1(const std::vector<std::vector<Span>>& pred,
                        const std::vector<std::vector<Span>>& gold) {
  if (pred.size() != gold.size())
    throw ShapeError("span_f1: " + std::to_string(pred.size()) + " predicted vs " +
                     std::to_string(gold.size()) + " gold samples");
  std::size_t tp = 0, np = 0, ng = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    std::multiset<Span> g(gold[i].begin(), gold[i].end());
    np += pred[i].size();
    ng += gold[i].size();
    for (const auto& s : pred[i]) {
      if (auto it = g.find(s); it != g.end()) {
        ++tp;
        g.erase(it);
      }
    }
  }
  return F1Report::from_counts(tp, np - tp, ng - tp);
}

/// Micro-F1 over relation labels where `none_label` is the negative class.
/// Every label must appear in `vocabulary` when it is non-empty.
inline F1Report relation_f1(const std::vector<std::string>& pred,
                            const std::vector<std::string>& gold,
                            const std::vector<std::string>& vocabulary = {},
                            const std::string& none_label = "None") {
  if (pred.size() != gold.size())
    throw ShapeError("relation_f1: " + std::to_string(pred.size()) + " predicted vs " +
                     std::to_string(gold.size()) + " gold labels");
  auto check = [&](const std::string& label) {
    if (!vocabulary.empty() && label != none_label &&
        std::find(vocabulary.begin(), vocabulary.end(), label) == vocabulary.end())
      throw LabelError("relation label '" + label + "' not in label vocabulary");
  };
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    check(pred[i]);
    check(gold[i]);
    bool pred_pos = pred[i] != none_label;
    bool gold_pos = gold[i] != none_label;
    if (pred_pos && gold_pos && pred[i] == gold[i]) {
      ++tp;
      continue;
    }
    if (pred_pos) ++fp;
    if (gold_pos) ++fn;
  }
  return F1Report::from_counts(tp, fp, fn);
}

}  // namespace cotpd
