#pragma once

#include "healthygan/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace healthygan {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Distinct deterministic sub-seed per (master seed, stream id).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t s = master ^ (0x5851f42d4c957f2dULL * (stream + 1));
  return splitmix64(s);
}

/// mt19937_64 engine with hand-specified uniform/normal transforms, so the
/// emitted value streams do not depend on a standard library's distribution
/// implementation. State round-trips exactly through text.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n).
  Index uniform_index(Index n) {
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    const std::uint64_t reject_below = (-un) % un;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= reject_below) return static_cast<Index>(r % un);
    }
  }

  /// Standard normal via Box-Muller; caches the paired value.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename S>
  void fill_normal(Tensor<S>& t, double mean, double stddev) {
    for (Index i = 0; i < t.numel(); ++i) t[i] = static_cast<S>(normal(mean, stddev));
  }

  template <typename S>
  void fill_uniform(Tensor<S>& t, double lo, double hi) {
    for (Index i = 0; i < t.numel(); ++i) t[i] = static_cast<S>(uniform(lo, hi));
  }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_ << ' ' << (have_spare_ ? 1 : 0) << ' ';
    os.precision(17);
    os << spare_;
    return os.str();
  }

  void deserialize(const std::string& text) {
    std::istringstream is(text);
    int spare_flag = 0;
    is >> engine_ >> spare_flag >> spare_;
    if (!is) throw std::runtime_error("rng: malformed serialized state");
    have_spare_ = spare_flag != 0;
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace healthygan
