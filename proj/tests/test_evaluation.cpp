#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "healthygan/evaluation.hpp"
#include "healthygan/rng.hpp"

#include <algorithm>
#include <cmath>

using namespace healthygan;

namespace {

/// O(n^2) pairwise reference used to pin the fast implementation.
double auc_oracle(const std::vector<double>& scores, const std::vector<int>& labels) {
  long long wins2 = 0, pairs = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins2 += 2;
      else if (scores[i] == scores[j]) wins2 += 1;
    }
  }
  return static_cast<double>(wins2) / (2.0 * static_cast<double>(pairs));
}

struct Instance {
  std::vector<double> scores;
  std::vector<int> labels;
};

Instance random_instance(Rng& rng, Index max_n, bool with_ties) {
  Instance inst;
  const Index n = 2 + rng.uniform_index(max_n - 1);
  for (Index i = 0; i < n; ++i) {
    inst.scores.push_back(with_ties ? static_cast<double>(rng.uniform_index(8)) / 4.0
                                    : rng.uniform());
    inst.labels.push_back(static_cast<int>(rng.uniform_index(2)));
  }
  inst.labels[0] = 0;
  inst.labels[1] = 1;
  return inst;
}

}  // namespace

TEST_CASE("anomaly score is the mean absolute deviation") {
  Tensor<float> x({1, 2, 4, 4});
  Rng rng(3);
  rng.fill_uniform(x, -1.0, 1.0);
  CHECK(anomaly_score(x, x) == 0.0);

  Tensor<float> shifted = x;
  shifted.data += 0.5f;
  CHECK(anomaly_score(x, shifted) == doctest::Approx(0.5).epsilon(1e-7));

  Tensor<float> half = x;
  half.data.head(16) += 0.4f;
  CHECK(anomaly_score(x, half) == doctest::Approx(0.2).epsilon(1e-6));

  Tensor<float> wrong({1, 2, 4, 5});
  CHECK_THROWS_AS((void)anomaly_score(x, wrong), std::invalid_argument);
}

TEST_CASE("roc_auc hand cases") {
  CHECK(roc_auc({0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0}) == 1.0);
  CHECK(roc_auc({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}) == 0.5);
  CHECK(roc_auc({0.7, 0.3, 0.5, 0.1}, {1, 1, 0, 0}) == 0.75);
  CHECK(roc_auc({0.1, 0.9}, {0, 1}) == 1.0);
  CHECK(roc_auc({0.9, 0.1}, {0, 1}) == 0.0);
  CHECK_THROWS_AS((void)roc_auc({0.1, 0.2}, {1, 1}), std::invalid_argument);
  CHECK_THROWS_AS((void)roc_auc({0.1, 0.2}, {0, 2}), std::invalid_argument);
  CHECK_THROWS_AS((void)roc_auc({0.1}, {0, 1}), std::invalid_argument);
}

TEST_CASE("roc_auc equals the pairwise oracle exactly") {
  Rng rng(17);
  for (int trial = 0; trial < 80; ++trial) {
    const auto inst = random_instance(rng, 120, trial % 2 == 0);
    CHECK(roc_auc(inst.scores, inst.labels) == auc_oracle(inst.scores, inst.labels));
  }
}

TEST_CASE("roc_auc invariances") {
  Rng rng(29);
  for (int trial = 0; trial < 30; ++trial) {
    const auto inst = random_instance(rng, 60, true);
    const double auc = roc_auc(inst.scores, inst.labels);

    auto transformed = inst.scores;
    for (double& s : transformed) s = std::exp(2.0 * s) + 3.0;
    CHECK(roc_auc(transformed, inst.labels) == auc);

    auto flipped = inst.labels;
    for (int& l : flipped) l = 1 - l;
    CHECK(roc_auc(inst.scores, flipped) == doctest::Approx(1.0 - auc).epsilon(1e-12));
  }
}

TEST_CASE("classification metrics confusion arithmetic") {
  const std::vector<double> s{5, 5, 5, 1, 0, 0, 0, 6};
  const std::vector<int> l{1, 1, 1, 1, 0, 0, 0, 0};
  const Metrics m = classification_metrics(s, l, 2.0);
  CHECK(m.tp == 3);
  CHECK(m.fp == 1);
  CHECK(m.fn == 1);
  CHECK(m.tn == 3);
  CHECK(m.precision == 0.75);
  CHECK(m.recall == 0.75);
  CHECK(m.specificity == 0.75);
  CHECK(m.f1 == 0.75);
  CHECK(!m.degenerate);

  const Metrics perfect = classification_metrics({0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0}, 0.5);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.specificity == 1.0);
  CHECK(perfect.f1 == 1.0);

  const Metrics none = classification_metrics({0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0}, 2.0);
  CHECK(none.recall == 0.0);
  CHECK(none.specificity == 1.0);
  CHECK(none.precision == 0.0);
  CHECK(none.f1 == 0.0);
  CHECK(none.degenerate);
}

TEST_CASE("confusion counts always partition the sample set") {
  Rng rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    const auto inst = random_instance(rng, 50, true);
    const double t = rng.uniform(-0.5, 2.5);
    const Metrics m = classification_metrics(inst.scores, inst.labels, t);
    CHECK(m.tp + m.fp + m.fn + m.tn == static_cast<long long>(inst.scores.size()));
    if (!m.degenerate) {
      const double hm = 2.0 * m.precision * m.recall / (m.precision + m.recall);
      CHECK(m.f1 == doctest::Approx(hm).epsilon(1e-15));
    }
  }
}

namespace {

/// Exhaustive scan over the same candidate set with the same tie rule.
ThresholdChoice threshold_oracle(const std::vector<double>& scores,
                                 const std::vector<int>& labels, ThresholdRule rule) {
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> cands;
  for (size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i] != sorted[i - 1]) cands.push_back(0.5 * (sorted[i - 1] + sorted[i]));
  if (cands.empty()) return {sorted.front(), true};
  ThresholdChoice best;
  double best_obj = -2.0, best_spec = -1.0;
  for (double t : cands) {
    const Metrics m = classification_metrics(scores, labels, t);
    const double obj = rule == ThresholdRule::max_f1 ? m.f1 : m.recall + m.specificity - 1.0;
    if (obj > best_obj || (obj == best_obj && m.specificity > best_spec)) {
      best_obj = obj;
      best_spec = m.specificity;
      best.threshold = t;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("threshold selection maximizes validation F1") {
  const std::vector<double> s{0.9, 0.8, 0.75, 0.4, 0.3, 0.1};
  const std::vector<int> l{1, 1, 0, 1, 0, 0};
  const auto choice = select_threshold(s, l);
  CHECK(!choice.degenerate);
  CHECK(choice.threshold == threshold_oracle(s, l, ThresholdRule::max_f1).threshold);

  const auto separated = select_threshold({0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0});
  const Metrics m = classification_metrics({0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0},
                                           separated.threshold);
  CHECK(m.f1 == 1.0);
  CHECK(!separated.degenerate);

  const auto degen = select_threshold({0.4, 0.4, 0.4}, {1, 0, 1});
  CHECK(degen.degenerate);
  CHECK(degen.threshold == 0.4);

  CHECK_THROWS_AS((void)select_threshold({0.4, 0.5}, {1, 1}), std::invalid_argument);
}

TEST_CASE("threshold selection matches the exhaustive oracle on random sets") {
  Rng rng(47);
  for (int trial = 0; trial < 60; ++trial) {
    const auto inst = random_instance(rng, 40, true);
    for (ThresholdRule rule : {ThresholdRule::max_f1, ThresholdRule::youden_j}) {
      const auto got = select_threshold(inst.scores, inst.labels, rule);
      const auto want = threshold_oracle(inst.scores, inst.labels, rule);
      CHECK(got.threshold == want.threshold);
      CHECK(got.degenerate == want.degenerate);
    }
  }
}

TEST_CASE("localization dice hand cases") {
  Tensor<double> diff({1, 1, 4, 4});
  Tensor<double> gt({1, 1, 4, 4});
  diff.data.setZero();
  gt.data.setZero();
  CHECK(localization_dice(diff, gt, 0.5) == 1.0);

  gt.data.head(4).setConstant(1.0);
  diff.data.head(4).setConstant(0.9);
  CHECK(localization_dice(diff, gt, 0.5) == 1.0);

  diff.data.setZero();
  diff.data.tail(4).setConstant(0.9);
  CHECK(localization_dice(diff, gt, 0.5) == 0.0);

  diff.data.setZero();
  diff.data.head(2).setConstant(0.9);
  diff.data.segment(8, 2).setConstant(0.9);
  CHECK(localization_dice(diff, gt, 0.5) == 0.5);

  Tensor<double> bad = gt;
  bad.data[0] = 0.5;
  CHECK_THROWS_AS((void)localization_dice(diff, bad, 0.5), std::invalid_argument);
  Tensor<double> wrong({1, 1, 4, 5});
  CHECK_THROWS_AS((void)localization_dice(diff, wrong, 0.5), std::invalid_argument);
}
