#pragma once

#include "healthygan/autodiff.hpp"
#include "healthygan/rng.hpp"

#include <stdexcept>
#include <vector>

namespace healthygan {

template <typename S>
struct LossWeights {
  S lambda_gp = S(10);
  S lambda_rec = S(1);
  S lambda_id = S(1);
  S lambda_f = S(0.1);
  S lambda_fs = S(1);
  S lambda_fz = S(1);
  S focus_eps = S(1e-6);
};

/// Per-sample convex mixture u*real + (1-u)*fake with u drawn uniformly once
/// per sample, the evaluation points for the gradient penalty.
template <typename S>
Tensor<S> interpolate_samples(const Tensor<S>& real, const Tensor<S>& fake, Rng& rng) {
  check_same_shape(real, fake, "interpolate_samples");
  const Index n = real.shape[0];
  const Index per = shape_numel(real.shape) / n;
  Tensor<S> out(real.shape);
  for (Index i = 0; i < n; ++i) {
    const S u = static_cast<S>(rng.uniform());
    out.data.segment(i * per, per) =
        u * real.data.segment(i * per, per) + (S(1) - u) * fake.data.segment(i * per, per);
  }
  return out;
}

/// Mean squared deviation of the per-sample input-gradient norm from 1,
/// where the gradient is of the summed critic scores. The returned value is
/// itself differentiable with respect to the critic parameters.
template <typename S, typename CriticFn>
Var<S> gradient_penalty(CriticFn&& critic, const Tensor<S>& mixed) {
  Var<S> x = Var<S>::leaf(mixed, true);
  Var<S> scores = critic(x);
  Var<S> g = grad(sum_all(scores), {x})[0];
  if (!g.defined())
    throw std::logic_error("gradient_penalty: gradients are disabled or the critic is constant");
  Var<S> norms = sqrt_(sample_sum(square(g)));
  return mean_all(square(add_const(norms, S(-1))));
}

/// Critic objective: drive fake scores down and real scores up, with the
/// gradient penalty keeping the critic 1-Lipschitz.
template <typename S>
Var<S> critic_loss(const Var<S>& fake_scores, const Var<S>& real_scores, const Var<S>& penalty,
                   S lambda_gp) {
  return add(sub(mean_all(fake_scores), mean_all(real_scores)), scale(penalty, lambda_gp));
}

/// Negated sum of mean critic scores over the translated batches fed in,
/// typically the anomalous path and optionally the healthy path too.
template <typename S>
Var<S> generator_adversarial_loss(const std::vector<Var<S>>& fake_scores) {
  if (fake_scores.empty())
    throw std::invalid_argument("generator_adversarial_loss: need at least one score batch");
  Var<S> total = neg(mean_all(fake_scores[0]));
  for (size_t i = 1; i < fake_scores.size(); ++i)
    total = sub(total, mean_all(fake_scores[i]));
  return total;
}

/// Mean absolute deviation of the translated healthy batch from itself
/// before translation.
template <typename S>
Var<S> identity_loss(const Var<S>& translated_healthy, const Var<S>& healthy) {
  return mean_all(abs_(sub(translated_healthy, healthy)));
}

/// Mean absolute deviation of the recomposed input from the original.
template <typename S>
Var<S> reconstruction_loss(const Var<S>& input, const Var<S>& reconstructed) {
  return mean_all(abs_(sub(input, reconstructed)));
}

/// Two regularizers on the blending mask, averaged over the batch: the
/// squared mean activation discourages large masks, and the mean reciprocal
/// distance from 0.5 pushes every element toward a hard 0 or 1.
template <typename S>
Var<S> focus_loss(const Var<S>& mask, S lambda_fs, S lambda_fz, S eps) {
  const Shape& s = mask.shape();
  if (s.size() != 4) throw std::invalid_argument("focus_loss: expected rank-4 mask");
  if (mask.value().min() < S(0) || mask.value().max() > S(1))
    throw std::invalid_argument("focus_loss: mask values must lie in [0,1]");
  const S inv_n = S(1) / static_cast<S>(s[1] * s[2] * s[3]);
  Var<S> size_term = square(scale(sample_sum(mask), inv_n));
  Var<S> ones = Var<S>::constant(Tensor<S>::full(s, S(1)));
  Var<S> zero_term =
      scale(sample_sum(div(ones, add_const(abs_(add_const(mask, S(-0.5))), eps))), inv_n);
  return mean_all(add(scale(size_term, lambda_fs), scale(zero_term, lambda_fz)));
}

template <typename S>
struct GeneratorLossTerms {
  Var<S> adv, rec, id, focus, total;
};

/// Weighted sum of the four generator terms. The focus weights live inside
/// focus_loss; lambda_f scales its result here.
template <typename S>
GeneratorLossTerms<S> generator_total_loss(const Var<S>& adv, const Var<S>& rec, const Var<S>& id,
                                           const Var<S>& focus, const LossWeights<S>& w) {
  Var<S> total = add(add(adv, scale(rec, w.lambda_rec)),
                     add(scale(id, w.lambda_id), scale(focus, w.lambda_f)));
  return {adv, rec, id, focus, total};
}

}  // namespace healthygan
