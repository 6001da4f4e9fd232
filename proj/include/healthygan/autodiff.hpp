#pragma once

#include "healthygan/tensor.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace healthygan {

// Reverse-mode autodiff over Tensor<S>. Every node's vjp is built from graph
// ops, so a gradient is itself a differentiable expression; that is what lets
// a training objective contain the norm of a gradient. vjp closures may
// capture parent variables and plain tensors, never the op's own output
// (that would create a shared_ptr cycle).

template <typename S>
class Var;

template <typename S>
struct Node {
  Tensor<S> value;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<S>>> parents;
  std::function<std::vector<Var<S>>(const Var<S>&)> vjp;
};

inline thread_local bool g_grad_enabled = true;

/// Scoped switch that disables graph construction (inference / detached data).
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
  ~NoGradGuard() { g_grad_enabled = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <typename S>
class Var {
 public:
  Var() = default;

  static Var leaf(Tensor<S> value, bool requires_grad = false) {
    Var v;
    v.node_ = std::make_shared<Node<S>>();
    v.node_->value = std::move(value);
    v.node_->requires_grad = requires_grad && g_grad_enabled;
    return v;
  }
  static Var constant(Tensor<S> value) { return leaf(std::move(value), false); }
  static Var scalar(S value) { return constant(Tensor<S>::scalar(value)); }

  bool defined() const { return node_ != nullptr; }
  const Tensor<S>& value() const { return node_->value; }
  Tensor<S>& value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape; }
  Index numel() const { return node_->value.numel(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  Node<S>* node() const { return node_.get(); }
  const std::shared_ptr<Node<S>>& ptr() const { return node_; }

  /// Same value, cut loose from the graph.
  Var detach() const { return constant(node_->value); }

 private:
  std::shared_ptr<Node<S>> node_;
};

template <typename S>
Var<S> make_op(Tensor<S> value, std::vector<Var<S>> parents,
               std::function<std::vector<Var<S>>(const Var<S>&)> vjp) {
  bool rg = false;
  if (g_grad_enabled)
    for (const auto& p : parents) rg = rg || p.requires_grad();
  if (!rg) return Var<S>::constant(std::move(value));
  Var<S> out = Var<S>::leaf(std::move(value), true);
  auto* n = out.node();
  n->parents.reserve(parents.size());
  for (auto& p : parents) n->parents.push_back(p.ptr());
  n->vjp = std::move(vjp);
  return out;
}

// ---------------------------------------------------------------------------
// elementwise ops
// ---------------------------------------------------------------------------

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  check_same_shape(a.value(), b.value(), "add");
  Tensor<S> out(a.shape());
  out.data = a.value().data + b.value().data;
  return make_op<S>(std::move(out), {a, b},
                    [](const Var<S>& g) { return std::vector<Var<S>>{g, g}; });
}

template <typename S>
Var<S> scale(const Var<S>& a, S c) {
  Tensor<S> out(a.shape());
  out.data = a.value().data * c;
  return make_op<S>(std::move(out), {a},
                    [c](const Var<S>& g) { return std::vector<Var<S>>{scale(g, c)}; });
}

template <typename S>
Var<S> neg(const Var<S>& a) {
  return scale(a, S(-1));
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  check_same_shape(a.value(), b.value(), "sub");
  Tensor<S> out(a.shape());
  out.data = a.value().data - b.value().data;
  return make_op<S>(std::move(out), {a, b}, [](const Var<S>& g) {
    return std::vector<Var<S>>{g, neg(g)};
  });
}

template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  check_same_shape(a.value(), b.value(), "mul");
  Tensor<S> out(a.shape());
  out.data = a.value().data * b.value().data;
  return make_op<S>(std::move(out), {a, b}, [a, b](const Var<S>& g) {
    return std::vector<Var<S>>{mul(g, b), mul(g, a)};
  });
}

template <typename S>
Var<S> div(const Var<S>& a, const Var<S>& b) {
  check_same_shape(a.value(), b.value(), "div");
  Tensor<S> out(a.shape());
  out.data = a.value().data / b.value().data;
  return make_op<S>(std::move(out), {a, b}, [a, b](const Var<S>& g) {
    Var<S> ga = div(g, b);
    Var<S> gb = neg(mul(ga, div(a, b)));  // -g*a/b^2
    return std::vector<Var<S>>{ga, gb};
  });
}

template <typename S>
Var<S> add_const(const Var<S>& a, S c) {
  Tensor<S> out(a.shape());
  out.data = a.value().data + c;
  return make_op<S>(std::move(out), {a},
                    [](const Var<S>& g) { return std::vector<Var<S>>{g}; });
}

template <typename S>
Var<S> square(const Var<S>& a) {
  return mul(a, a);
}

template <typename S>
Var<S> sqrt_(const Var<S>& a) {
  Tensor<S> out(a.shape());
  out.data = a.value().data.sqrt();
  return make_op<S>(std::move(out), {a}, [a](const Var<S>& g) {
    // d sqrt(x) = 1 / (2 sqrt(x)); recomputes the root to avoid self-capture
    return std::vector<Var<S>>{div(g, scale(sqrt_(a), S(2)))};
  });
}

template <typename S>
Var<S> tanh_(const Var<S>& a) {
  Tensor<S> out(a.shape());
  out.data = a.value().data.tanh();
  return make_op<S>(std::move(out), {a}, [a](const Var<S>& g) {
    Var<S> t = tanh_(a);
    return std::vector<Var<S>>{mul(g, add_const(neg(square(t)), S(1)))};
  });
}

template <typename S>
Var<S> abs_(const Var<S>& a) {
  Tensor<S> out(a.shape());
  out.data = a.value().data.abs();
  return make_op<S>(std::move(out), {a}, [a](const Var<S>& g) {
    Tensor<S> sgn(a.shape());
    sgn.data = a.value().data.unaryExpr(
        [](S v) { return v > S(0) ? S(1) : (v < S(0) ? S(-1) : S(0)); });
    return std::vector<Var<S>>{mul(g, Var<S>::constant(std::move(sgn)))};
  });
}

template <typename S>
Var<S> leaky_relu(const Var<S>& a, S slope) {
  Tensor<S> out(a.shape());
  out.data = a.value().data.unaryExpr([slope](S v) { return v > S(0) ? v : slope * v; });
  return make_op<S>(std::move(out), {a}, [a, slope](const Var<S>& g) {
    Tensor<S> m(a.shape());
    m.data = a.value().data.unaryExpr([slope](S v) { return v > S(0) ? S(1) : slope; });
    return std::vector<Var<S>>{mul(g, Var<S>::constant(std::move(m)))};
  });
}

template <typename S>
Var<S> relu(const Var<S>& a) {
  return leaky_relu(a, S(0));
}

// ---------------------------------------------------------------------------
// reductions and broadcasts (each pair is mutually adjoint)
// ---------------------------------------------------------------------------

template <typename S>
Var<S> broadcast_full(const Var<S>& s, const Shape& shape);

template <typename S>
Var<S> sum_all(const Var<S>& a) {
  Tensor<S> out = Tensor<S>::scalar(a.value().data.sum());
  Shape sh = a.shape();
  return make_op<S>(std::move(out), {a}, [sh](const Var<S>& g) {
    return std::vector<Var<S>>{broadcast_full(g, sh)};
  });
}

template <typename S>
Var<S> broadcast_full(const Var<S>& s, const Shape& shape) {
  if (s.numel() != 1) throw std::invalid_argument("broadcast_full: source not scalar");
  Tensor<S> out = Tensor<S>::full(shape, s.value()[0]);
  return make_op<S>(std::move(out), {s},
                    [](const Var<S>& g) { return std::vector<Var<S>>{sum_all(g)}; });
}

template <typename S>
Var<S> mean_all(const Var<S>& a) {
  return scale(sum_all(a), S(1) / static_cast<S>(a.numel()));
}

namespace detail {
template <typename S>
void check_rank4(const Var<S>& a, const char* op) {
  if (a.shape().size() != 4)
    throw std::invalid_argument(std::string(op) + ": expected rank-4 tensor, got " +
                                shape_str(a.shape()));
}
}  // namespace detail

template <typename S>
Var<S> sample_broadcast(const Var<S>& v, Index c, Index h, Index w);

/// (N,C,H,W) -> (N): sum over everything but the batch dim.
template <typename S>
Var<S> sample_sum(const Var<S>& a) {
  detail::check_rank4(a, "sample_sum");
  const Shape& s = a.shape();
  const Index n = s[0], per = s[1] * s[2] * s[3];
  Tensor<S> out({n});
  for (Index i = 0; i < n; ++i) out[i] = a.value().data.segment(i * per, per).sum();
  const Index c = s[1], h = s[2], w = s[3];
  return make_op<S>(std::move(out), {a}, [c, h, w](const Var<S>& g) {
    return std::vector<Var<S>>{sample_broadcast(g, c, h, w)};
  });
}

/// (N) -> (N,C,H,W): repeat each sample's scalar across its image.
template <typename S>
Var<S> sample_broadcast(const Var<S>& v, Index c, Index h, Index w) {
  if (v.shape().size() != 1) throw std::invalid_argument("sample_broadcast: expected rank-1");
  const Index n = v.shape()[0], per = c * h * w;
  Tensor<S> out({n, c, h, w});
  for (Index i = 0; i < n; ++i) out.data.segment(i * per, per).setConstant(v.value()[i]);
  return make_op<S>(std::move(out), {v},
                    [](const Var<S>& g) { return std::vector<Var<S>>{sample_sum(g)}; });
}

template <typename S>
Var<S> spatial_broadcast(const Var<S>& v, Index h, Index w);

/// (N,C,H,W) -> (N,C): sum over the spatial dims.
template <typename S>
Var<S> spatial_sum(const Var<S>& a) {
  detail::check_rank4(a, "spatial_sum");
  const Shape& s = a.shape();
  const Index nc = s[0] * s[1], hw = s[2] * s[3];
  Tensor<S> out({s[0], s[1]});
  for (Index i = 0; i < nc; ++i) out[i] = a.value().data.segment(i * hw, hw).sum();
  const Index h = s[2], w = s[3];
  return make_op<S>(std::move(out), {a}, [h, w](const Var<S>& g) {
    return std::vector<Var<S>>{spatial_broadcast(g, h, w)};
  });
}

/// (N,C) -> (N,C,H,W).
template <typename S>
Var<S> spatial_broadcast(const Var<S>& v, Index h, Index w) {
  if (v.shape().size() != 2) throw std::invalid_argument("spatial_broadcast: expected rank-2");
  const Index n = v.shape()[0], c = v.shape()[1], hw = h * w;
  Tensor<S> out({n, c, h, w});
  for (Index i = 0; i < n * c; ++i) out.data.segment(i * hw, hw).setConstant(v.value()[i]);
  return make_op<S>(std::move(out), {v},
                    [](const Var<S>& g) { return std::vector<Var<S>>{spatial_sum(g)}; });
}

template <typename S>
Var<S> channel_broadcast(const Var<S>& v, Index n, Index h, Index w);

/// (N,C,H,W) -> (C): sum over batch and spatial dims (adjoint of a per-channel
/// parameter broadcast).
template <typename S>
Var<S> channel_sum(const Var<S>& a) {
  detail::check_rank4(a, "channel_sum");
  const Shape& s = a.shape();
  const Index n = s[0], c = s[1], hw = s[2] * s[3];
  Tensor<S> out = Tensor<S>::zeros({c});
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < c; ++j) out[j] += a.value().data.segment((i * c + j) * hw, hw).sum();
  const Index nn = s[0], h = s[2], w = s[3];
  return make_op<S>(std::move(out), {a}, [nn, h, w](const Var<S>& g) {
    return std::vector<Var<S>>{channel_broadcast(g, nn, h, w)};
  });
}

/// (C) -> (N,C,H,W).
template <typename S>
Var<S> channel_broadcast(const Var<S>& v, Index n, Index h, Index w) {
  if (v.shape().size() != 1) throw std::invalid_argument("channel_broadcast: expected rank-1");
  const Index c = v.shape()[0], hw = h * w;
  Tensor<S> out({n, c, h, w});
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < c; ++j) out.data.segment((i * c + j) * hw, hw).setConstant(v.value()[j]);
  return make_op<S>(std::move(out), {v},
                    [](const Var<S>& g) { return std::vector<Var<S>>{channel_sum(g)}; });
}

template <typename S>
Var<S> expand_channels(const Var<S>& m, Index c);

/// (N,C,H,W) -> (N,1,H,W): sum across channels.
template <typename S>
Var<S> collapse_channels(const Var<S>& a) {
  detail::check_rank4(a, "collapse_channels");
  const Shape& s = a.shape();
  const Index n = s[0], c = s[1], hw = s[2] * s[3];
  Tensor<S> out = Tensor<S>::zeros({n, Index(1), s[2], s[3]});
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < c; ++j)
      out.data.segment(i * hw, hw) += a.value().data.segment((i * c + j) * hw, hw);
  return make_op<S>(std::move(out), {a}, [c](const Var<S>& g) {
    return std::vector<Var<S>>{expand_channels(g, c)};
  });
}

/// (N,1,H,W) -> (N,C,H,W): repeat the single channel (mask applied per channel).
template <typename S>
Var<S> expand_channels(const Var<S>& m, Index c) {
  detail::check_rank4(m, "expand_channels");
  const Shape& s = m.shape();
  if (s[1] != 1) throw std::invalid_argument("expand_channels: source must have 1 channel");
  const Index n = s[0], hw = s[2] * s[3];
  Tensor<S> out({n, c, s[2], s[3]});
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < c; ++j)
      out.data.segment((i * c + j) * hw, hw) = m.value().data.segment(i * hw, hw);
  return make_op<S>(std::move(out), {m}, [](const Var<S>& g) {
    return std::vector<Var<S>>{collapse_channels(g)};
  });
}

template <typename S>
Var<S> pad_channels(const Var<S>& a, Index c0, Index c_total);

/// (N,C,H,W) -> (N, c1-c0, H, W): channel range view.
template <typename S>
Var<S> slice_channels(const Var<S>& a, Index c0, Index c1) {
  detail::check_rank4(a, "slice_channels");
  const Shape& s = a.shape();
  if (c0 < 0 || c1 > s[1] || c0 >= c1) throw std::invalid_argument("slice_channels: bad range");
  const Index n = s[0], c = s[1], hw = s[2] * s[3], cs = c1 - c0;
  Tensor<S> out({n, cs, s[2], s[3]});
  for (Index i = 0; i < n; ++i)
    out.data.segment(i * cs * hw, cs * hw) = a.value().data.segment((i * c + c0) * hw, cs * hw);
  return make_op<S>(std::move(out), {a}, [c0, c](const Var<S>& g) {
    return std::vector<Var<S>>{pad_channels(g, c0, c)};
  });
}

/// Inverse of slice_channels: embed into a zero tensor with c_total channels.
template <typename S>
Var<S> pad_channels(const Var<S>& a, Index c0, Index c_total) {
  detail::check_rank4(a, "pad_channels");
  const Shape& s = a.shape();
  const Index n = s[0], cs = s[1], hw = s[2] * s[3];
  Tensor<S> out = Tensor<S>::zeros({n, c_total, s[2], s[3]});
  for (Index i = 0; i < n; ++i)
    out.data.segment((i * c_total + c0) * hw, cs * hw) = a.value().data.segment(i * cs * hw, cs * hw);
  const Index c1 = c0 + cs;
  return make_op<S>(std::move(out), {a}, [c0, c1](const Var<S>& g) {
    return std::vector<Var<S>>{slice_channels(g, c0, c1)};
  });
}

template <typename S>
Var<S> reshape(const Var<S>& a, Shape sh) {
  if (shape_numel(sh) != a.numel()) throw std::invalid_argument("reshape: element count changed");
  Tensor<S> out(sh, a.value().data);
  Shape prev = a.shape();
  return make_op<S>(std::move(out), {a}, [prev](const Var<S>& g) {
    return std::vector<Var<S>>{reshape(g, prev)};
  });
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

/// Gradients of `output` w.r.t. each of `wrt`. The result is itself part of
/// the graph, so it can be differentiated again. Entries for variables the
/// output does not depend on come back undefined.
template <typename S>
std::vector<Var<S>> grad(const Var<S>& output, const std::vector<Var<S>>& wrt,
                         Var<S> seed = {}) {
  if (!output.defined()) throw std::invalid_argument("grad: undefined output");
  if (!seed.defined()) {
    if (output.numel() != 1) throw std::invalid_argument("grad: output must be scalar");
    seed = Var<S>::constant(Tensor<S>::scalar(S(1)));
  }

  // Iterative topological order over the requires_grad subgraph.
  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> seen;
  std::vector<std::pair<Node<S>*, size_t>> stack;
  if (output.node()->requires_grad) stack.push_back({output.node(), 0});
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i == 0 && seen.count(n)) {
      stack.pop_back();
      continue;
    }
    seen.insert(n);
    if (i < n->parents.size()) {
      Node<S>* p = n->parents[i++].get();
      if (p->requires_grad && !seen.count(p)) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  std::unordered_map<Node<S>*, Var<S>> grads;
  grads[output.node()] = seed;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<S>* n = *it;
    auto git = grads.find(n);
    if (git == grads.end() || !n->vjp) continue;
    std::vector<Var<S>> pg = n->vjp(git->second);
    if (pg.size() != n->parents.size())
      throw std::logic_error("grad: vjp arity mismatch");
    for (size_t i = 0; i < pg.size(); ++i) {
      Node<S>* p = n->parents[i].get();
      if (!p->requires_grad || !pg[i].defined()) continue;
      auto [slot, fresh] = grads.try_emplace(p, pg[i]);
      if (!fresh) slot->second = add(slot->second, pg[i]);
    }
  }

  std::vector<Var<S>> out;
  out.reserve(wrt.size());
  for (const auto& v : wrt) {
    auto it2 = grads.find(v.node());
    out.push_back(it2 == grads.end() ? Var<S>() : it2->second);
  }
  return out;
}

/// grad() with zeros substituted for unused inputs.
template <typename S>
std::vector<Tensor<S>> grad_tensors(const Var<S>& output, const std::vector<Var<S>>& wrt) {
  auto gs = grad(output, wrt);
  std::vector<Tensor<S>> out;
  out.reserve(gs.size());
  for (size_t i = 0; i < gs.size(); ++i)
    out.push_back(gs[i].defined() ? gs[i].value() : Tensor<S>::zeros(wrt[i].shape()));
  return out;
}

}  // namespace healthygan
