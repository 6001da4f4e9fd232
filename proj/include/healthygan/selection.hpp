#pragma once

#include "healthygan/checkpoint.hpp"
#include "healthygan/composition.hpp"
#include "healthygan/conv.hpp"
#include "healthygan/datasets.hpp"

#include <Eigen/Dense>

#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace healthygan {

// Checkpoint ranking by Frechet distance between translated mixed validation
// inputs and a healthy reference set. Feature statistics are always
// accumulated in double so the matrix square root is stable regardless of the
// model scalar type.

struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  long long n = 0;
};

/// Maps an image batch (N, C, H, W) to an N x d feature matrix.
template <typename S>
using FeatureExtractor = std::function<Eigen::MatrixXd(const Tensor<S>&)>;

/// Fixed-seed random convolutional embedder. Three strided convolutions with
/// fan-in scaled weights, leaky rectification, and a global mean pool. Random
/// projections preserve distributional differences well enough for ranking,
/// and the fixed seed keeps the whole suite free of pretrained weights. A
/// pretrained embedder can be supplied through the same FeatureExtractor
/// signature instead.
template <typename S>
class RandomConvEmbedder {
 public:
  explicit RandomConvEmbedder(Index channels, std::uint64_t seed = 17) : channels_(channels) {
    if (channels < 1) throw std::invalid_argument("embedder: channels must be positive");
    Rng rng(derive_seed(seed, 21));
    Index in = channels;
    for (Index width : {Index(16), Index(32), Index(64)}) {
      Tensor<S> w({width, in, 4, 4});
      rng.fill_normal(w, 0.0, std::sqrt(2.0 / static_cast<double>(in * 16)));
      weights_.push_back(std::move(w));
      in = width;
    }
  }

  Index dim() const { return 64; }
  Index channels() const { return channels_; }

  Eigen::MatrixXd operator()(const Tensor<S>& batch) const {
    if (batch.shape.size() != 4 || batch.shape[1] != channels_)
      throw std::invalid_argument("embedder: expected (N, " + std::to_string(channels_) +
                                  ", H, W) input");
    if (batch.shape[2] % 8 != 0 || batch.shape[3] % 8 != 0 || batch.shape[2] < 8 ||
        batch.shape[3] < 8)
      throw std::invalid_argument("embedder: spatial dims must be multiples of 8");
    Tensor<S> x = batch;
    for (const auto& w : weights_) {
      x = conv2d_fwd(x, w, 2, 1);
      x.data = x.data.unaryExpr([](S v) { return v > S(0) ? v : S(0.2) * v; });
    }
    const Index n = x.shape[0], c = x.shape[1], hw = x.shape[2] * x.shape[3];
    Eigen::MatrixXd feats(n, c);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < c; ++j)
        feats(i, j) = x.data.segment((i * c + j) * hw, hw).template cast<double>().mean();
    return feats;
  }

 private:
  Index channels_;
  std::vector<Tensor<S>> weights_;
};

/// Streaming mean and covariance over feature rows. Covariance uses the n-1
/// normalization.
class FeatureAccumulator {
 public:
  void add(const Eigen::MatrixXd& feats) {
    if (feats.rows() == 0) return;
    if (d_ < 0) {
      d_ = feats.cols();
      sum_ = Eigen::VectorXd::Zero(d_);
      sumsq_ = Eigen::MatrixXd::Zero(d_, d_);
    }
    if (feats.cols() != d_)
      throw std::invalid_argument("features: dimension changed mid-stream");
    sum_ += feats.colwise().sum().transpose();
    sumsq_.selfadjointView<Eigen::Lower>().rankUpdate(feats.transpose(), 1.0);
    n_ += feats.rows();
  }

  long long count() const { return n_; }

  FeatureStats finish() const {
    if (n_ < 2) throw std::invalid_argument("features: need at least 2 samples");
    FeatureStats s;
    s.n = n_;
    const double n = static_cast<double>(n_);
    s.mean = sum_ / n;
    Eigen::MatrixXd raw = Eigen::MatrixXd(sumsq_.selfadjointView<Eigen::Lower>());
    s.covariance = (raw - n * s.mean * s.mean.transpose()) / (n - 1.0);
    s.covariance = 0.5 * (s.covariance + s.covariance.transpose().eval());
    return s;
  }

 private:
  Eigen::Index d_ = -1;
  long long n_ = 0;
  Eigen::VectorXd sum_;
  Eigen::MatrixXd sumsq_;
};

template <typename S>
FeatureStats extract_features(const std::vector<Tensor<S>>& batches,
                              const FeatureExtractor<S>& extractor) {
  FeatureAccumulator acc;
  for (const auto& b : batches) acc.add(extractor(b));
  return acc.finish();
}

/// Frechet distance between two Gaussians summarized by FeatureStats.
double frechet_distance(const FeatureStats& s1, const FeatureStats& s2);

struct CheckpointScore {
  std::string path;
  long long iteration = -1;
  double fid = std::numeric_limits<double>::quiet_NaN();
  bool ok = false;
  bool selected = false;
  std::string error;
};

struct SelectionResult {
  std::vector<CheckpointScore> scores;
  size_t best_index = 0;
  const CheckpointScore& best() const { return scores.at(best_index); }
};

namespace detail {

/// Translate every image of the set through the checkpointed generator and
/// accumulate embedder features, in fixed-size batches.
template <typename S>
FeatureStats translated_features(TrainState<S>& state, CachedSet<S>& inputs,
                                 const FeatureExtractor<S>& extractor, Index batch) {
  NoGradGuard guard;
  FeatureAccumulator acc;
  for (Index start = 0; start < inputs.size(); start += batch) {
    const Index count = std::min(batch, inputs.size() - start);
    Tensor<S> x({count, state.cfg.channels, state.cfg.image_size, state.cfg.image_size});
    const Index per = x.numel() / count;
    for (Index i = 0; i < count; ++i)
      x.data.segment(i * per, per) = inputs.image(start + i).data;
    auto out = state.gen.forward(Var<S>::constant(x));
    Tensor<S> healthy =
        compose_healthy(out.intermediate.value(), out.mask.value(), x);
    acc.add(extractor(healthy));
  }
  return acc.finish();
}

}  // namespace detail

/// Scores every checkpoint by FID of its translated mixed validation inputs
/// against the healthy reference stats and returns the argmin, ties broken
/// toward the later iteration. Failed checkpoints are skipped with a warning
/// line; if every checkpoint fails the selection itself fails. Labels are
/// never consulted.
template <typename S>
SelectionResult select_best_checkpoint(const std::vector<std::string>& checkpoint_paths,
                                       CachedSet<S>& healthy_reference,
                                       CachedSet<S>& mixed_val_inputs,
                                       const FeatureExtractor<S>& extractor, Index batch = 16,
                                       std::ostream* warnings = nullptr) {
  if (checkpoint_paths.empty())
    throw std::invalid_argument("selection: need at least one checkpoint");

  FeatureAccumulator healthy_acc;
  for (Index start = 0; start < healthy_reference.size(); start += batch) {
    const Index count = std::min(batch, healthy_reference.size() - start);
    const Tensor<S>& first = healthy_reference.image(start);
    Tensor<S> chunk({count, first.shape[1], first.shape[2], first.shape[3]});
    const Index per = chunk.numel() / count;
    for (Index i = 0; i < count; ++i)
      chunk.data.segment(i * per, per) = healthy_reference.image(start + i).data;
    healthy_acc.add(extractor(chunk));
  }
  const FeatureStats healthy_stats = healthy_acc.finish();

  SelectionResult result;
  for (const auto& path : checkpoint_paths) {
    CheckpointScore score;
    score.path = path;
    try {
      TrainState<S> state = load_checkpoint<S>(path);
      score.iteration = state.iteration;
      const FeatureStats gen_stats =
          detail::translated_features(state, mixed_val_inputs, extractor, batch);
      score.fid = frechet_distance(gen_stats, healthy_stats);
      score.ok = true;
    } catch (const std::exception& e) {
      score.error = e.what();
      if (warnings)
        *warnings << "warning: skipping checkpoint " << path << ": " << e.what() << "\n";
    }
    result.scores.push_back(std::move(score));
  }

  bool found = false;
  for (size_t i = 0; i < result.scores.size(); ++i) {
    const auto& s = result.scores[i];
    if (!s.ok) continue;
    const auto& best = result.scores[result.best_index];
    if (!found || s.fid < best.fid || (s.fid == best.fid && s.iteration > best.iteration)) {
      result.best_index = i;
      found = true;
    }
  }
  if (!found) throw std::runtime_error("selection: every checkpoint failed to score");
  result.scores[result.best_index].selected = true;
  return result;
}

/// Report CSV, one row per scored checkpoint in input order.
void write_selection_report(const std::string& path, const SelectionResult& result);

}  // namespace healthygan
