#pragma once

#include "healthygan/layers.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace healthygan {

inline Index scaled_width(Index base, double width_scale) {
  Index w = static_cast<Index>(std::llround(static_cast<double>(base) * width_scale));
  return w < 1 ? 1 : w;
}

template <typename S>
inline Index parameter_count(const ParamList<S>& params) {
  Index n = 0;
  for (const auto& p : params) n += shape_numel(p.var.shape());
  return n;
}

template <typename S>
struct GeneratorOutput {
  Var<S> intermediate;  // (N,C,H,W), tanh range
  Var<S> mask;          // (N,1,H,W), values in [0,1]
};

/// Encoder, six residual blocks at the bottleneck, decoder. The head emits
/// C+1 channels through tanh; the first C form the intermediate image, the
/// last is rescaled to [0,1] as the blending mask.
template <typename S>
class Generator {
 public:
  Generator() = default;

  Generator(Index channels, double width_scale, uint64_t seed)
      : channels_(channels), width_scale_(width_scale) {
    if (channels < 1) throw std::invalid_argument("generator: channels must be >= 1");
    Rng rng(seed);
    const Index w64 = scaled_width(64, width_scale);
    const Index w128 = scaled_width(128, width_scale);
    const Index w256 = scaled_width(256, width_scale);
    enc1_ = ConvLayer<S>(params_, "gen.enc1.conv", channels, w64, 7, 1, 3, rng);
    enc1n_ = InstanceNorm<S>(params_, "gen.enc1.norm", w64);
    enc2_ = ConvLayer<S>(params_, "gen.enc2.conv", w64, w128, 4, 2, 1, rng);
    enc2n_ = InstanceNorm<S>(params_, "gen.enc2.norm", w128);
    enc3_ = ConvLayer<S>(params_, "gen.enc3.conv", w128, w256, 4, 2, 1, rng);
    enc3n_ = InstanceNorm<S>(params_, "gen.enc3.norm", w256);
    for (int i = 0; i < 6; ++i)
      res_[i] = ResidualBlock<S>(params_, "gen.res" + std::to_string(i + 1), w256, rng);
    dec1_ = DeconvLayer<S>(params_, "gen.dec1.deconv", w256, w128, 4, 2, 1, rng);
    dec1n_ = InstanceNorm<S>(params_, "gen.dec1.norm", w128);
    dec2_ = DeconvLayer<S>(params_, "gen.dec2.deconv", w128, w64, 4, 2, 1, rng);
    dec2n_ = InstanceNorm<S>(params_, "gen.dec2.norm", w64);
    out_ = DeconvLayer<S>(params_, "gen.out", w64, channels + 1, 7, 1, 3, rng);
  }

  GeneratorOutput<S> forward(const Var<S>& x) const {
    const Shape& s = x.shape();
    if (s.size() != 4 || s[1] != channels_)
      throw std::invalid_argument("generator: expected (N," + std::to_string(channels_) +
                                  ",H,W), got " + shape_str(s));
    if (s[2] % 4 != 0 || s[3] % 4 != 0 || s[2] < 8 || s[3] < 8)
      throw std::invalid_argument("generator: spatial dims must be multiples of 4 and >= 8, got " +
                                  shape_str(s));
    Var<S> h = relu(enc1n_.forward(enc1_.forward(x)));
    h = relu(enc2n_.forward(enc2_.forward(h)));
    h = relu(enc3n_.forward(enc3_.forward(h)));
    for (const auto& block : res_) h = block.forward(h);
    h = relu(dec1n_.forward(dec1_.forward(h)));
    h = relu(dec2n_.forward(dec2_.forward(h)));
    Var<S> y = tanh_(out_.forward(h));
    Var<S> intermediate = slice_channels(y, 0, channels_);
    Var<S> mask = scale(add_const(slice_channels(y, channels_, channels_ + 1), S(1)), S(0.5));
    return {intermediate, mask};
  }

  ParamList<S>& params() { return params_; }
  const ParamList<S>& params() const { return params_; }
  Index channels() const { return channels_; }
  double width_scale() const { return width_scale_; }

 private:
  Index channels_ = 0;
  double width_scale_ = 1.0;
  ParamList<S> params_;
  ConvLayer<S> enc1_, enc2_, enc3_;
  InstanceNorm<S> enc1n_, enc2n_, enc3n_;
  ResidualBlock<S> res_[6];
  DeconvLayer<S> dec1_, dec2_, out_;
  InstanceNorm<S> dec1n_, dec2n_;
};

/// Strided convolution stack with leaky rectifiers and no normalization,
/// topped by a 3x3 convolution producing a one-channel score map. Each of the
/// `depth` strided layers halves the spatial extent.
template <typename S>
class Critic {
 public:
  Critic() = default;

  Critic(Index channels, double width_scale, uint64_t seed, int depth = 6)
      : channels_(channels), width_scale_(width_scale), depth_(depth) {
    if (channels < 1) throw std::invalid_argument("critic: channels must be >= 1");
    if (depth < 1 || depth > 10) throw std::invalid_argument("critic: depth must be in [1,10]");
    Rng rng(seed);
    Index prev = channels;
    layers_.reserve(static_cast<size_t>(depth));
    for (int i = 0; i < depth; ++i) {
      const Index w = scaled_width(Index(64) << i, width_scale);
      layers_.emplace_back(params_, "critic.conv" + std::to_string(i + 1), prev, w, 4, 2, 1, rng);
      prev = w;
    }
    out_ = ConvLayer<S>(params_, "critic.out", prev, 1, 3, 1, 1, rng);
  }

  Var<S> forward(const Var<S>& x) const {
    const Shape& s = x.shape();
    if (s.size() != 4 || s[1] != channels_)
      throw std::invalid_argument("critic: expected (N," + std::to_string(channels_) +
                                  ",H,W), got " + shape_str(s));
    const Index factor = Index(1) << depth_;
    if (s[2] % factor != 0 || s[3] % factor != 0 || s[2] < factor || s[3] < factor)
      throw std::invalid_argument("critic: spatial dims must be multiples of " +
                                  std::to_string(factor) + ", got " + shape_str(s));
    Var<S> h = x;
    for (const auto& layer : layers_) h = leaky_relu(layer.forward(h), S(0.01));
    return out_.forward(h);
  }

  ParamList<S>& params() { return params_; }
  const ParamList<S>& params() const { return params_; }
  Index channels() const { return channels_; }
  double width_scale() const { return width_scale_; }
  int depth() const { return depth_; }

 private:
  Index channels_ = 0;
  double width_scale_ = 1.0;
  int depth_ = 6;
  ParamList<S> params_;
  std::vector<ConvLayer<S>> layers_;
  ConvLayer<S> out_;
};

}  // namespace healthygan
