#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lussl/core/error.hpp"

namespace lussl::eval {

/// Probability that a random positive outscores a random negative, ties
/// counted one half. Computed from midranks in O(N log N).
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("auc: scores and labels differ in length");
  std::size_t n_pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw DataError("auc: labels must be 0 or 1");
    n_pos += static_cast<std::size_t>(y);
  }
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("auc: need at least one positive and one negative label");

  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[idx[k]] == 1) pos_rank_sum += midrank;
    i = j;
  }
  const double np = static_cast<double>(n_pos), nn_ = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn_);
}

inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  return auc(std::span<const double>(scores), std::span<const int>(labels));
}

struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

/// nullopt marks an undefined ratio (zero denominator); it is never 0.
struct ThresholdMetrics {
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> specificity;
  ConfusionMatrix confusion;
};

inline ConfusionMatrix confusion_at(std::span<const double> scores, std::span<const int> labels, double threshold) {
  if (scores.size() != labels.size()) throw ShapeError("threshold_metrics: scores and labels differ in length");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1)
      (predicted ? cm.tp : cm.fn)++;
    else
      (predicted ? cm.fp : cm.tn)++;
  }
  return cm;
}

inline std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

/// Scores at or above `threshold` are predicted positive.
inline ThresholdMetrics threshold_metrics(std::span<const double> scores, std::span<const int> labels,
                                          double threshold = 0.5) {
  ThresholdMetrics m;
  m.confusion = confusion_at(scores, labels, threshold);
  const auto& c = m.confusion;
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.specificity = ratio(c.tn, c.tn + c.fp);
  return m;
}

inline ThresholdMetrics threshold_metrics(const std::vector<double>& scores, const std::vector<int>& labels,
                                          double threshold = 0.5) {
  return threshold_metrics(std::span<const double>(scores), std::span<const int>(labels), threshold);
}

inline std::string format_metric(const std::optional<double>& v, int precision = 3) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", precision, *v);
  return buf;
}

/// n-th root of the product, evaluated in log space.
inline double geometric_mean(std::span<const double> values) {
  if (values.empty()) throw DataError("geometric_mean: no values");
  double log_sum = 0.0;
  for (double v : values) {
    if (!(v > 0.0)) throw DataError("geometric_mean: values must be positive");
    log_sum += std::log(v);
  }
  return std::exp(log_sum / static_cast<double>(values.size()));
}

inline double geometric_mean(const std::vector<double>& values) { return geometric_mean(std::span<const double>(values)); }

}  // namespace lussl::eval
