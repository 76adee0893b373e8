#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "vampnet/error.hpp"

namespace vampnet {

/// ROC AUC as the Mann-Whitney statistic: the fraction of (positive,
/// negative) pairs ranked correctly, ties counting one half. NaN when either
/// class is absent.
inline double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionError("roc_auc: score and label counts differ");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of (1-based, tie-averaged) ranks of the positives.
  double pos_rank_sum = 0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) {
        pos_rank_sum += avg_rank;
        ++pos;
      }
    i = j;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) return std::numeric_limits<double>::quiet_NaN();
  const double p = static_cast<double>(pos);
  return (pos_rank_sum - p * (p + 1) / 2.0) / (p * static_cast<double>(neg));
}

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

inline Confusion confusion(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5) {
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (labels[i] == 1)
      pred ? ++c.tp : ++c.fn;
    else
      pred ? ++c.fp : ++c.tn;
  }
  return c;
}

/// Undefined ratios (zero denominators) are reported as 0, except AUC which
/// stays NaN for single-class splits.
struct MetricsReport {
  double loss = 0;
  double accuracy = 0;
  double balanced_accuracy = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  double auc = std::numeric_limits<double>::quiet_NaN();
  std::size_t count = 0;
};

inline MetricsReport compute_metrics(std::span<const double> scores, std::span<const int> labels,
                                     double threshold = 0.5) {
  auto ratio = [](double a, double b) { return b > 0 ? a / b : 0.0; };
  const Confusion c = confusion(scores, labels, threshold);
  MetricsReport m;
  m.count = scores.size();
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp), tn = static_cast<double>(c.tn),
               fn = static_cast<double>(c.fn);
  m.accuracy = ratio(tp + tn, tp + tn + fp + fn);
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  const double specificity = ratio(tn, tn + fp);
  if (tp + fn > 0 && tn + fp > 0)
    m.balanced_accuracy = (m.recall + specificity) / 2.0;
  else
    m.balanced_accuracy = tp + fn > 0 ? m.recall : specificity;
  m.f1 = ratio(2 * m.precision * m.recall, m.precision + m.recall);
  m.auc = roc_auc(scores, labels);
  return m;
}

}  // namespace vampnet
