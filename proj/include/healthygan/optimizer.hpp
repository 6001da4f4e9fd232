#pragma once

#include "healthygan/layers.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace healthygan {

/// Adam over one parameter group. Moment buffers are addressed by position in
/// the group, so the group's composition must not change between steps.
template <typename S>
class Adam {
 public:
  Adam() = default;

  explicit Adam(const ParamList<S>& params, S beta1 = S(0.5), S beta2 = S(0.999),
                S eps = S(1e-8))
      : beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params) {
      m_.push_back(Tensor<S>::zeros(p.var.shape()));
      v_.push_back(Tensor<S>::zeros(p.var.shape()));
    }
  }

  /// One update with the given learning rate; grads[i] pairs with params[i].
  /// An undefined grad (parameter unused by the objective) is skipped but
  /// still advances that buffer's bias correction consistently.
  void step(ParamList<S>& params, const std::vector<Tensor<S>>& grads, S lr) {
    if (params.size() != m_.size() || grads.size() != m_.size())
      throw std::invalid_argument("adam: parameter group size changed");
    ++t_;
    const S bc1 = S(1) - std::pow(beta1_, static_cast<S>(t_));
    const S bc2 = S(1) - std::pow(beta2_, static_cast<S>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
      const Tensor<S>& g = grads[i];
      if (g.numel() == 0) continue;
      m_[i].data = beta1_ * m_[i].data + (S(1) - beta1_) * g.data;
      v_[i].data = beta2_ * v_[i].data + (S(1) - beta2_) * g.data.square();
      params[i].var.value().data -=
          lr * (m_[i].data / bc1) / ((v_[i].data / bc2).sqrt() + eps_);
    }
  }

  long long step_count() const { return t_; }
  void set_step_count(long long t) { t_ = t; }
  size_t size() const { return m_.size(); }

  Tensor<S>& moment1(size_t i) { return m_[i]; }
  Tensor<S>& moment2(size_t i) { return v_[i]; }
  const Tensor<S>& moment1(size_t i) const { return m_[i]; }
  const Tensor<S>& moment2(size_t i) const { return v_[i]; }

 private:
  S beta1_ = S(0.5), beta2_ = S(0.999), eps_ = S(1e-8);
  long long t_ = 0;
  std::vector<Tensor<S>> m_, v_;
};

}  // namespace healthygan
