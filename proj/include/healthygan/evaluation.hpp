#pragma once

#include "healthygan/composition.hpp"

#include <string>
#include <vector>

namespace healthygan {

// Screening metrics over per-image anomaly scores: exact Mann-Whitney AUC,
// validation-side threshold selection, confusion-matrix metrics, and Dice
// overlap against synthetic ground-truth masks.

/// Mean absolute deviation between an input and its translation, computed as
/// the mean of the difference map so the scored sample and its stored map
/// agree bit for bit.
template <typename S>
double anomaly_score(const Tensor<S>& x, const Tensor<S>& translated) {
  const Tensor<S> diff = difference_map(x, translated);
  return static_cast<double>(diff.data.template cast<double>().mean());
}

/// Exact ROC AUC: P(score_pos > score_neg) + half the tie probability,
/// accumulated with integer pair counts. Throws when a class is missing.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct ThresholdChoice {
  double threshold = 0.0;
  /// Set when no informative candidate exists (all scores identical).
  bool degenerate = false;
};

enum class ThresholdRule { max_f1, youden_j };

/// Picks the threshold maximizing validation F1 (or Youden's J) over the
/// midpoints of adjacent distinct sorted scores; ties break toward higher
/// specificity.
ThresholdChoice select_threshold(const std::vector<double>& scores,
                                 const std::vector<int>& labels,
                                 ThresholdRule rule = ThresholdRule::max_f1);

struct Metrics {
  long long tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0, recall = 0, specificity = 0, f1 = 0;
  /// Set when an undefined ratio was reported as 0.
  bool degenerate = false;
};

/// Predicts anomalous iff score >= threshold and reports the confusion matrix
/// with the four derived ratios. Throws when a class is missing.
Metrics classification_metrics(const std::vector<double>& scores, const std::vector<int>& labels,
                               double threshold);

struct EvalReport {
  double auc = 0;
  double precision = 0, recall = 0, specificity = 0, f1 = 0;
  double threshold = 0;
  long long n_pos = 0, n_neg = 0;
  bool threshold_degenerate = false;
  bool metrics_degenerate = false;
};

/// Dice overlap between the thresholded difference map and the ground-truth
/// mask; two empty sets count as perfect agreement.
template <typename S>
double localization_dice(const Tensor<S>& diff_map, const Tensor<S>& gt_mask,
                         double pixel_threshold) {
  check_same_shape(diff_map, gt_mask, "localization_dice");
  long long pred = 0, truth = 0, both = 0;
  for (Index i = 0; i < diff_map.numel(); ++i) {
    const bool p = static_cast<double>(diff_map.data[i]) >= pixel_threshold;
    const S g = gt_mask.data[i];
    if (g != S(0) && g != S(1))
      throw std::invalid_argument("localization_dice: gt_mask must be binary");
    pred += p;
    truth += g != S(0);
    both += p && g != S(0);
  }
  if (pred + truth == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(pred + truth);
}

}  // namespace healthygan
