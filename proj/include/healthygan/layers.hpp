#pragma once

#include "healthygan/autodiff.hpp"
#include "healthygan/conv.hpp"
#include "healthygan/rng.hpp"

#include <string>
#include <utility>
#include <vector>

namespace healthygan {

template <typename S>
struct NamedParam {
  std::string name;
  Var<S> var;
};

template <typename S>
using ParamList = std::vector<NamedParam<S>>;

namespace detail {

template <typename S>
Var<S> new_param(ParamList<S>& reg, const std::string& name, Tensor<S> init) {
  Var<S> v = Var<S>::leaf(std::move(init), true);
  reg.push_back({name, v});
  return v;
}

template <typename S>
Tensor<S> conv_weight_init(Shape sh, Rng& rng, double stddev = 0.02) {
  Tensor<S> t(std::move(sh));
  rng.fill_normal(t, 0.0, stddev);
  return t;
}

}  // namespace detail

/// Convolution with bias.
template <typename S>
struct ConvLayer {
  Var<S> w, b;
  Index stride = 1, pad = 0;

  ConvLayer() = default;
  ConvLayer(ParamList<S>& reg, const std::string& name, Index in_ch, Index out_ch, Index k,
            Index stride_, Index pad_, Rng& rng)
      : stride(stride_), pad(pad_) {
    w = detail::new_param(reg, name + ".w",
                          detail::conv_weight_init<S>({out_ch, in_ch, k, k}, rng));
    b = detail::new_param(reg, name + ".b", Tensor<S>::zeros({out_ch}));
  }

  Var<S> forward(const Var<S>& x) const {
    Var<S> y = conv2d(x, w, stride, pad);
    const Shape& s = y.shape();
    return add(y, channel_broadcast(b, s[0], s[2], s[3]));
  }
};

/// Transposed convolution with bias; weight layout (in_ch, out_ch, k, k).
template <typename S>
struct DeconvLayer {
  Var<S> w, b;
  Index stride = 1, pad = 0;

  DeconvLayer() = default;
  DeconvLayer(ParamList<S>& reg, const std::string& name, Index in_ch, Index out_ch, Index k,
              Index stride_, Index pad_, Rng& rng)
      : stride(stride_), pad(pad_) {
    w = detail::new_param(reg, name + ".w",
                          detail::conv_weight_init<S>({in_ch, out_ch, k, k}, rng));
    b = detail::new_param(reg, name + ".b", Tensor<S>::zeros({out_ch}));
  }

  Var<S> forward(const Var<S>& x) const {
    const Shape& s = x.shape();
    const Index k = w.shape()[2];
    const Index h_out = (s[2] - 1) * stride - 2 * pad + k;
    const Index w_out = (s[3] - 1) * stride - 2 * pad + k;
    Var<S> y = conv_transpose2d(x, w, stride, pad, h_out, w_out);
    return add(y, channel_broadcast(b, s[0], h_out, w_out));
  }
};

/// Instance normalization with learned per-channel gain/shift. Statistics are
/// per (sample, channel) over the spatial dims, so behavior does not depend
/// on batch composition. Built from primitive ops; differentiable to any
/// order for free.
template <typename S>
struct InstanceNorm {
  Var<S> gain, shift;
  S eps = S(1e-5);

  InstanceNorm() = default;
  InstanceNorm(ParamList<S>& reg, const std::string& name, Index ch) {
    gain = detail::new_param(reg, name + ".gain", Tensor<S>::full({ch}, S(1)));
    shift = detail::new_param(reg, name + ".shift", Tensor<S>::zeros({ch}));
  }

  Var<S> forward(const Var<S>& x) const {
    const Shape& s = x.shape();
    const Index n = s[0], h = s[2], w = s[3];
    const S inv_hw = S(1) / static_cast<S>(h * w);
    Var<S> mean = scale(spatial_sum(x), inv_hw);                       // (N,C)
    Var<S> centered = sub(x, spatial_broadcast(mean, h, w));
    Var<S> var = scale(spatial_sum(square(centered)), inv_hw);         // biased variance
    Var<S> inv_std = div(Var<S>::constant(Tensor<S>::full({n, s[1]}, S(1))),
                         sqrt_(add_const(var, eps)));
    Var<S> normed = mul(centered, spatial_broadcast(inv_std, h, w));
    return add(mul(normed, channel_broadcast(gain, n, h, w)),
               channel_broadcast(shift, n, h, w));
  }
};

/// Two 3x3 convolutions with instance norm, rectifier after the first only,
/// identity skip.
template <typename S>
struct ResidualBlock {
  ConvLayer<S> conv1, conv2;
  InstanceNorm<S> norm1, norm2;

  ResidualBlock() = default;
  ResidualBlock(ParamList<S>& reg, const std::string& name, Index ch, Rng& rng)
      : conv1(reg, name + ".conv1", ch, ch, 3, 1, 1, rng),
        conv2(reg, name + ".conv2", ch, ch, 3, 1, 1, rng),
        norm1(reg, name + ".norm1", ch),
        norm2(reg, name + ".norm2", ch) {}

  Var<S> forward(const Var<S>& x) const {
    Var<S> y = relu(norm1.forward(conv1.forward(x)));
    y = norm2.forward(conv2.forward(y));
    return add(x, y);
  }
};

}  // namespace healthygan
