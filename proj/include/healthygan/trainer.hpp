#pragma once

#include "healthygan/composition.hpp"
#include "healthygan/losses.hpp"
#include "healthygan/networks.hpp"
#include "healthygan/optimizer.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <stdexcept>
#include <string>

namespace healthygan {

struct TrainConfig {
  Index channels = 3;
  Index image_size = 256;
  Index batch_size = 16;
  long long total_iterations = 400000;
  long long decay_iterations = 100000;
  double base_lr = 1e-4;
  int critic_steps_per_gen = 2;
  double width_scale = 1.0;
  int critic_depth = 6;
  std::uint64_t seed = 0;
  bool adv_healthy_path = true;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double lambda_gp = 10.0;
  double lambda_rec = 1.0;
  double lambda_id = 1.0;
  double lambda_f = 0.1;
  double lambda_fs = 1.0;
  double lambda_fz = 1.0;
  double focus_eps = 1e-6;

  template <typename S>
  LossWeights<S> weights() const {
    LossWeights<S> w;
    w.lambda_gp = static_cast<S>(lambda_gp);
    w.lambda_rec = static_cast<S>(lambda_rec);
    w.lambda_id = static_cast<S>(lambda_id);
    w.lambda_f = static_cast<S>(lambda_f);
    w.lambda_fs = static_cast<S>(lambda_fs);
    w.lambda_fz = static_cast<S>(lambda_fz);
    w.focus_eps = static_cast<S>(focus_eps);
    return w;
  }

  void validate() const {
    if (channels < 1) throw std::invalid_argument("train: channels must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (total_iterations < 1) throw std::invalid_argument("train: total_iterations must be >= 1");
    if (decay_iterations < 1 || decay_iterations > total_iterations)
      throw std::invalid_argument("train: decay_iterations must be in [1, total_iterations]");
    if (base_lr <= 0) throw std::invalid_argument("train: base_lr must be positive");
    if (critic_steps_per_gen < 1)
      throw std::invalid_argument("train: critic_steps_per_gen must be >= 1");
    const Index factor = Index(1) << critic_depth;
    if (image_size % 4 != 0 || image_size % factor != 0)
      throw std::invalid_argument("train: image_size incompatible with network strides");
  }
};

/// Constant at base_lr, then linear decay to zero over the final
/// decay_iterations. Defined on [0, total_iterations].
inline double learning_rate(const TrainConfig& cfg, long long iteration) {
  if (iteration < 0 || iteration > cfg.total_iterations)
    throw std::out_of_range("learning_rate: iteration outside [0, total_iterations]");
  const long long onset = cfg.total_iterations - cfg.decay_iterations;
  if (iteration <= onset) return cfg.base_lr;
  return cfg.base_lr * static_cast<double>(cfg.total_iterations - iteration) /
         static_cast<double>(cfg.decay_iterations);
}

/// One row of the training log. Generator fields are meaningful only when
/// gen_updated is set.
struct IterationLog {
  long long iteration = 0;
  double adv_d = 0, gp = 0;
  double adv_g = 0, id = 0, rec = 0, focus = 0, total_g = 0;
  double lr = 0;
  bool gen_updated = false;

  bool finite() const {
    auto ok = [](double v) { return std::isfinite(v); };
    bool f = ok(adv_d) && ok(gp) && ok(lr);
    if (gen_updated) f = f && ok(adv_g) && ok(id) && ok(rec) && ok(focus) && ok(total_g);
    return f;
  }
};

inline const char* log_header() {
  return "iteration,adv_d,gp,adv_g,id,rec,focus,total_g,lr";
}

/// CSV row with full round-trip precision; generator columns are empty on
/// critic-only iterations so resumed logs splice bit-for-bit.
inline std::string format_log_row(const IterationLog& log) {
  char buf[340];
  auto num = [](double v) {
    char b[32];
    std::snprintf(b, sizeof(b), "%.17g", v);
    return std::string(b);
  };
  if (log.gen_updated) {
    std::snprintf(buf, sizeof(buf), "%lld,%s,%s,%s,%s,%s,%s,%s,%s", log.iteration,
                  num(log.adv_d).c_str(), num(log.gp).c_str(), num(log.adv_g).c_str(),
                  num(log.id).c_str(), num(log.rec).c_str(), num(log.focus).c_str(),
                  num(log.total_g).c_str(), num(log.lr).c_str());
  } else {
    std::snprintf(buf, sizeof(buf), "%lld,%s,%s,,,,,,%s", log.iteration, num(log.adv_d).c_str(),
                  num(log.gp).c_str(), num(log.lr).c_str());
  }
  return buf;
}

/// Pulls fresh unpaired batches; each call advances the passed RNG, which is
/// the only state, so checkpointing the RNG checkpoints the data stream.
template <typename S>
struct BatchSource {
  std::function<Tensor<S>(Rng&)> next_a, next_b;
};

template <typename S>
struct TrainState {
  TrainConfig cfg;
  Generator<S> gen;
  Critic<S> critic;
  Adam<S> gen_opt, critic_opt;
  Rng data_rng, gp_rng;
  long long iteration = 0;
};

namespace detail {
inline constexpr std::uint64_t kGenStream = 1, kCriticStream = 2, kDataStream = 3,
                               kGpStream = 4;
}

template <typename S>
TrainState<S> make_train_state(const TrainConfig& cfg) {
  cfg.validate();
  TrainState<S> st;
  st.cfg = cfg;
  st.gen = Generator<S>(cfg.channels, cfg.width_scale, derive_seed(cfg.seed, detail::kGenStream));
  st.critic = Critic<S>(cfg.channels, cfg.width_scale, derive_seed(cfg.seed, detail::kCriticStream),
                        cfg.critic_depth);
  st.gen_opt = Adam<S>(st.gen.params(), S(cfg.adam_beta1), S(cfg.adam_beta2));
  st.critic_opt = Adam<S>(st.critic.params(), S(cfg.adam_beta1), S(cfg.adam_beta2));
  st.data_rng = Rng(derive_seed(cfg.seed, detail::kDataStream));
  st.gp_rng = Rng(derive_seed(cfg.seed, detail::kGpStream));
  return st;
}

struct TrainingDiverged : std::runtime_error {
  long long iteration;
  TrainingDiverged(long long it, const std::string& what)
      : std::runtime_error(what), iteration(it) {}
};

namespace detail {

template <typename S>
std::vector<Var<S>> param_vars(const ParamList<S>& params) {
  std::vector<Var<S>> vs;
  vs.reserve(params.size());
  for (const auto& p : params) vs.push_back(p.var);
  return vs;
}

}  // namespace detail

/// One training iteration: always a critic update; additionally a generator
/// update on every critic_steps_per_gen-th call (the last of each group).
template <typename S>
IterationLog train_iteration(TrainState<S>& state, const BatchSource<S>& source) {
  const TrainConfig& cfg = state.cfg;
  const LossWeights<S> w = cfg.weights<S>();
  const double lr = learning_rate(cfg, state.iteration);
  IterationLog log;
  log.iteration = state.iteration;
  log.lr = lr;

  auto critic_fn = [&](const Var<S>& x) { return state.critic.forward(x); };

  {
    Tensor<S> a_t = source.next_a(state.data_rng);
    Tensor<S> b_t = source.next_b(state.data_rng);
    Tensor<S> fake_t;
    {
      NoGradGuard guard;
      Var<S> a = Var<S>::constant(a_t);
      auto out = state.gen.forward(a);
      fake_t = compose_healthy(out.intermediate, out.mask, a).value();
    }
    Tensor<S> mixed = interpolate_samples(b_t, fake_t, state.gp_rng);
    Var<S> gp = gradient_penalty<S>(critic_fn, mixed);
    Var<S> d_loss = critic_loss(critic_fn(Var<S>::constant(fake_t)),
                                critic_fn(Var<S>::constant(b_t)), gp, w.lambda_gp);
    log.adv_d = static_cast<double>(d_loss.value()[0]);
    log.gp = static_cast<double>(gp.value()[0]);
    auto grads = grad_tensors(d_loss, detail::param_vars(state.critic.params()));
    state.critic_opt.step(state.critic.params(), grads, static_cast<S>(lr));
  }

  if ((state.iteration + 1) % cfg.critic_steps_per_gen == 0) {
    Tensor<S> a_t = source.next_a(state.data_rng);
    Tensor<S> b_t = source.next_b(state.data_rng);
    Var<S> a = Var<S>::constant(a_t);
    Var<S> b = Var<S>::constant(b_t);
    auto out_a = state.gen.forward(a);
    auto out_b = state.gen.forward(b);
    Var<S> healthy_a = compose_healthy(out_a.intermediate, out_a.mask, a);
    Var<S> healthy_b = compose_healthy(out_b.intermediate, out_b.mask, b);
    Var<S> recon_a = compose_reconstruction(out_a.intermediate, out_a.mask, a);

    std::vector<Var<S>> fake_scores{critic_fn(healthy_a)};
    if (cfg.adv_healthy_path) fake_scores.push_back(critic_fn(healthy_b));
    Var<S> adv = generator_adversarial_loss(fake_scores);
    Var<S> rec = reconstruction_loss(a, recon_a);
    Var<S> id = identity_loss(out_b.intermediate, b);
    Var<S> focus = scale(add(focus_loss(out_a.mask, w.lambda_fs, w.lambda_fz, w.focus_eps),
                             focus_loss(out_b.mask, w.lambda_fs, w.lambda_fz, w.focus_eps)),
                         S(0.5));
    auto terms = generator_total_loss(adv, rec, id, focus, w);

    log.adv_g = static_cast<double>(terms.adv.value()[0]);
    log.rec = static_cast<double>(terms.rec.value()[0]);
    log.id = static_cast<double>(terms.id.value()[0]);
    log.focus = static_cast<double>(terms.focus.value()[0]);
    log.total_g = static_cast<double>(terms.total.value()[0]);
    log.gen_updated = true;

    auto grads = grad_tensors(terms.total, detail::param_vars(state.gen.params()));
    state.gen_opt.step(state.gen.params(), grads, static_cast<S>(lr));
  }

  ++state.iteration;
  if (!log.finite())
    throw TrainingDiverged(log.iteration - 1,
                           "non-finite loss at iteration " + std::to_string(log.iteration - 1));
  return log;
}

}  // namespace healthygan
