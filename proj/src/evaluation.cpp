#include "healthygan/evaluation.hpp"

#include <algorithm>
#include <stdexcept>

namespace healthygan {

namespace {

void check_classes(const std::vector<double>& scores, const std::vector<int>& labels,
                   long long& n_pos, long long& n_neg) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("metrics: scores and labels differ in length");
  n_pos = n_neg = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw std::invalid_argument("metrics: labels must be 0 or 1");
    (l ? n_pos : n_neg) += 1;
  }
  if (n_pos == 0 || n_neg == 0)
    throw std::invalid_argument("metrics: both classes must be present");
}

}  // namespace

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  long long n_pos, n_neg;
  check_classes(scores, labels, n_pos, n_neg);

  std::vector<size_t> order(scores.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  // Walk tie groups in ascending score order. A positive beats every negative
  // strictly below its group and half-ties with negatives inside it, so the
  // doubled numerator 2*wins + ties stays integral and the division happens
  // once.
  long long wins2 = 0, neg_below = 0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    long long pos_here = 0, neg_here = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? pos_here : neg_here) += 1;
      ++j;
    }
    wins2 += 2 * pos_here * neg_below + pos_here * neg_here;
    neg_below += neg_here;
    i = j;
  }
  return static_cast<double>(wins2) / (2.0 * static_cast<double>(n_pos) *
                                       static_cast<double>(n_neg));
}

Metrics classification_metrics(const std::vector<double>& scores,
                               const std::vector<int>& labels, double threshold) {
  long long n_pos, n_neg;
  check_classes(scores, labels, n_pos, n_neg);

  Metrics m;
  for (size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (labels[i])
      (pred ? m.tp : m.fn) += 1;
    else
      (pred ? m.fp : m.tn) += 1;
  }
  auto ratio = [&m](long long num, long long den) {
    if (den == 0) {
      m.degenerate = true;
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  m.precision = ratio(m.tp, m.tp + m.fp);
  m.recall = ratio(m.tp, m.tp + m.fn);
  m.specificity = ratio(m.tn, m.tn + m.fp);
  if (m.precision + m.recall == 0.0) {
    m.f1 = 0.0;
    m.degenerate = true;
  } else {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  }
  return m;
}

ThresholdChoice select_threshold(const std::vector<double>& scores,
                                 const std::vector<int>& labels, ThresholdRule rule) {
  long long n_pos, n_neg;
  check_classes(scores, labels, n_pos, n_neg);

  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> candidates;
  for (size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i] != sorted[i - 1]) candidates.push_back(0.5 * (sorted[i - 1] + sorted[i]));

  if (candidates.empty()) return {sorted.front(), true};

  ThresholdChoice choice;
  double best_obj = -2.0, best_spec = -1.0;
  for (double t : candidates) {
    const Metrics m = classification_metrics(scores, labels, t);
    const double obj =
        rule == ThresholdRule::max_f1 ? m.f1 : m.recall + m.specificity - 1.0;
    if (obj > best_obj || (obj == best_obj && m.specificity > best_spec)) {
      best_obj = obj;
      best_spec = m.specificity;
      choice.threshold = t;
    }
  }
  return choice;
}

}  // namespace healthygan
