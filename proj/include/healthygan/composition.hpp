#pragma once

#include "healthygan/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace healthygan {

namespace detail {

template <typename S>
void check_composition_shapes(const Shape& img, const Shape& mask) {
  if (img.size() != 4 || mask.size() != 4)
    throw std::invalid_argument("composition: expected rank-4 tensors");
  if (mask[1] != 1)
    throw std::invalid_argument("composition: mask must have one channel, got " + shape_str(mask));
  if (mask[0] != img[0] || mask[2] != img[2] || mask[3] != img[3])
    throw std::invalid_argument("composition: mask " + shape_str(mask) +
                                " does not match image " + shape_str(img));
}

}  // namespace detail

/// intermediate*M + input*(1-M). With M identically 1 this returns the
/// intermediate exactly; with M identically 0 it returns the input exactly.
template <typename S>
Var<S> compose_healthy(const Var<S>& intermediate, const Var<S>& mask, const Var<S>& input) {
  check_same_shape(intermediate.value(), input.value(), "compose_healthy");
  detail::check_composition_shapes<S>(intermediate.shape(), mask.shape());
  Var<S> m = expand_channels(mask, intermediate.shape()[1]);
  Var<S> one_minus_m = add_const(neg(m), S(1));
  return add(mul(intermediate, m), mul(input, one_minus_m));
}

/// input*M + intermediate*(1-M); the complementary blend. The sum of the two
/// compositions equals input + intermediate.
template <typename S>
Var<S> compose_reconstruction(const Var<S>& intermediate, const Var<S>& mask,
                              const Var<S>& input) {
  check_same_shape(intermediate.value(), input.value(), "compose_reconstruction");
  detail::check_composition_shapes<S>(intermediate.shape(), mask.shape());
  Var<S> m = expand_channels(mask, intermediate.shape()[1]);
  Var<S> one_minus_m = add_const(neg(m), S(1));
  return add(mul(input, m), mul(intermediate, one_minus_m));
}

template <typename S>
Tensor<S> compose_healthy(const Tensor<S>& intermediate, const Tensor<S>& mask,
                          const Tensor<S>& input) {
  NoGradGuard guard;
  return compose_healthy(Var<S>::constant(intermediate), Var<S>::constant(mask),
                         Var<S>::constant(input))
      .value();
}

template <typename S>
Tensor<S> compose_reconstruction(const Tensor<S>& intermediate, const Tensor<S>& mask,
                                 const Tensor<S>& input) {
  NoGradGuard guard;
  return compose_reconstruction(Var<S>::constant(intermediate), Var<S>::constant(mask),
                                Var<S>::constant(input))
      .value();
}

/// Per-pixel channel-mean absolute difference, (N,C,H,W) x2 -> (N,1,H,W).
template <typename S>
Tensor<S> difference_map(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape(a, b, "difference_map");
  if (a.shape.size() != 4) throw std::invalid_argument("difference_map: expected rank-4 tensors");
  const Index n = a.shape[0], c = a.shape[1], hw = a.shape[2] * a.shape[3];
  Tensor<S> out({n, 1, a.shape[2], a.shape[3]});
  out.data.setZero();
  const S inv_c = S(1) / static_cast<S>(c);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < c; ++j) {
      auto src_a = a.data.segment((i * c + j) * hw, hw);
      auto src_b = b.data.segment((i * c + j) * hw, hw);
      out.data.segment(i * hw, hw) += (src_a - src_b).abs() * inv_c;
    }
  return out;
}

}  // namespace healthygan
