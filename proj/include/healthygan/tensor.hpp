#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace healthygan {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_numel(const Shape& s) {
  Index n = 1;
  for (Index d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

/// Dense tensor with row-major logical layout (NCHW for rank 4), flat
/// Eigen array storage so elementwise work stays vectorized.
template <typename S>
struct Tensor {
  using Storage = Eigen::Array<S, Eigen::Dynamic, 1>;

  Shape shape;
  Storage data;

  Tensor() = default;
  explicit Tensor(Shape sh) : shape(std::move(sh)), data(shape_numel(shape)) {}
  Tensor(Shape sh, Storage d) : shape(std::move(sh)), data(std::move(d)) {
    if (data.size() != shape_numel(shape))
      throw std::invalid_argument("tensor storage does not match shape " + shape_str(shape));
  }

  static Tensor zeros(Shape sh) {
    Tensor t(std::move(sh));
    t.data.setZero();
    return t;
  }
  static Tensor full(Shape sh, S v) {
    Tensor t(std::move(sh));
    t.data.setConstant(v);
    return t;
  }
  static Tensor scalar(S v) { return full({1}, v); }

  Index numel() const { return data.size(); }
  Index rank() const { return static_cast<Index>(shape.size()); }
  Index dim(size_t i) const { return shape.at(i); }

  S* ptr() { return data.data(); }
  const S* ptr() const { return data.data(); }

  S& operator[](Index i) { return data[i]; }
  S operator[](Index i) const { return data[i]; }

  // Rank-4 accessor, mostly for tests and image assembly.
  S& at4(Index n, Index c, Index h, Index w) {
    return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  S at4(Index n, Index c, Index h, Index w) const {
    return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }

  bool all_finite() const { return data.isFinite().all(); }
  S min() const { return data.minCoeff(); }
  S max() const { return data.maxCoeff(); }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.shape = shape;
    out.data = data.template cast<T>();
    return out;
  }
};

template <typename S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (!same_shape(a.shape, b.shape))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                                " vs " + shape_str(b.shape));
}

}  // namespace healthygan
