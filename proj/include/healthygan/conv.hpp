#pragma once

#include "healthygan/autodiff.hpp"
#include "healthygan/tensor.hpp"

#include <stdexcept>

namespace healthygan {

// 2-D convolution (cross-correlation) with square stride/padding over NCHW.
// Three bilinear primitives cover forward and both adjoints:
//   F(x, w) = conv2d            x:(N,Ci,H,W)   w:(Co,Ci,kh,kw) -> (N,Co,Ho,Wo)
//   G(t, w) = conv_transpose2d  t:(N,Co,Ho,Wo) w:(Co,Ci,kh,kw) -> (N,Ci,H,W)
//   H(x, t) = conv_weight_grad                                 -> (Co,Ci,kh,kw)
// with <F(x,w), t> == <x, G(t,w)> == <w, H(x,t)>. Each one's vjp is built
// from the other two, so any order of differentiation stays inside the set.

inline Index conv_out_size(Index in, Index k, Index stride, Index pad) {
  const Index span = in + 2 * pad - k;
  if (span < 0) throw std::invalid_argument("conv: kernel larger than padded input");
  return span / stride + 1;
}

namespace detail {

// col is row-major (Ci*kh*kw) x (Ho*Wo).
template <typename S>
void im2col(const S* x, Index ci, Index h, Index w, Index kh, Index kw, Index stride,
            Index pad, Index ho, Index wo, S* col) {
  for (Index c = 0; c < ci; ++c) {
    const S* xc = x + c * h * w;
    for (Index ki = 0; ki < kh; ++ki) {
      for (Index kj = 0; kj < kw; ++kj) {
        S* row = col + ((c * kh + ki) * kw + kj) * ho * wo;
        for (Index oh = 0; oh < ho; ++oh) {
          const Index ih = oh * stride - pad + ki;
          S* dst = row + oh * wo;
          if (ih < 0 || ih >= h) {
            for (Index ow = 0; ow < wo; ++ow) dst[ow] = S(0);
            continue;
          }
          const S* src = xc + ih * w;
          for (Index ow = 0; ow < wo; ++ow) {
            const Index iw = ow * stride - pad + kj;
            dst[ow] = (iw >= 0 && iw < w) ? src[iw] : S(0);
          }
        }
      }
    }
  }
}

template <typename S>
void col2im(const S* col, Index ci, Index h, Index w, Index kh, Index kw, Index stride,
            Index pad, Index ho, Index wo, S* x /* accumulated into */) {
  for (Index c = 0; c < ci; ++c) {
    S* xc = x + c * h * w;
    for (Index ki = 0; ki < kh; ++ki) {
      for (Index kj = 0; kj < kw; ++kj) {
        const S* row = col + ((c * kh + ki) * kw + kj) * ho * wo;
        for (Index oh = 0; oh < ho; ++oh) {
          const Index ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= h) continue;
          const S* src = row + oh * wo;
          S* dst = xc + ih * w;
          for (Index ow = 0; ow < wo; ++ow) {
            const Index iw = ow * stride - pad + kj;
            if (iw >= 0 && iw < w) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using RowMap = Eigen::Map<RowMat<S>>;
template <typename S>
using ConstRowMap = Eigen::Map<const RowMat<S>>;

}  // namespace detail

template <typename S>
Tensor<S> conv2d_fwd(const Tensor<S>& x, const Tensor<S>& w, Index stride, Index pad) {
  if (x.rank() != 4 || w.rank() != 4) throw std::invalid_argument("conv2d: rank-4 inputs required");
  const Index n = x.shape[0], ci = x.shape[1], h = x.shape[2], ww = x.shape[3];
  const Index co = w.shape[0], kh = w.shape[2], kw = w.shape[3];
  if (w.shape[1] != ci)
    throw std::invalid_argument("conv2d: input has " + std::to_string(ci) +
                                " channels, kernel expects " + std::to_string(w.shape[1]));
  const Index ho = conv_out_size(h, kh, stride, pad), wo = conv_out_size(ww, kw, stride, pad);
  const Index k = ci * kh * kw, p = ho * wo;

  Tensor<S> y({n, co, ho, wo});
  Tensor<S> col({k, p});
  detail::ConstRowMap<S> wm(w.ptr(), co, k);
  for (Index i = 0; i < n; ++i) {
    detail::im2col(x.ptr() + i * ci * h * ww, ci, h, ww, kh, kw, stride, pad, ho, wo, col.ptr());
    detail::RowMap<S> ym(y.ptr() + i * co * p, co, p);
    detail::ConstRowMap<S> cm(col.ptr(), k, p);
    ym.noalias() = wm * cm;
  }
  return y;
}

template <typename S>
Tensor<S> conv_transpose2d_fwd(const Tensor<S>& t, const Tensor<S>& w, Index stride, Index pad,
                               Index h_out, Index w_out) {
  if (t.rank() != 4 || w.rank() != 4)
    throw std::invalid_argument("conv_transpose2d: rank-4 inputs required");
  const Index n = t.shape[0], co = t.shape[1], ho = t.shape[2], wo = t.shape[3];
  const Index ci = w.shape[1], kh = w.shape[2], kw = w.shape[3];
  if (w.shape[0] != co)
    throw std::invalid_argument("conv_transpose2d: channel mismatch");
  if (conv_out_size(h_out, kh, stride, pad) != ho || conv_out_size(w_out, kw, stride, pad) != wo)
    throw std::invalid_argument("conv_transpose2d: output size inconsistent with input map");
  const Index k = ci * kh * kw, p = ho * wo;

  Tensor<S> x = Tensor<S>::zeros({n, ci, h_out, w_out});
  Tensor<S> col({k, p});
  detail::ConstRowMap<S> wm(w.ptr(), co, k);
  for (Index i = 0; i < n; ++i) {
    detail::ConstRowMap<S> tm(t.ptr() + i * co * p, co, p);
    detail::RowMap<S> cm(col.ptr(), k, p);
    cm.noalias() = wm.transpose() * tm;
    detail::col2im(col.ptr(), ci, h_out, w_out, kh, kw, stride, pad, ho, wo,
                   x.ptr() + i * ci * h_out * w_out);
  }
  return x;
}

template <typename S>
Tensor<S> conv_weight_grad_fwd(const Tensor<S>& x, const Tensor<S>& t, Index stride, Index pad,
                               Index kh, Index kw) {
  const Index n = x.shape[0], ci = x.shape[1], h = x.shape[2], ww = x.shape[3];
  const Index co = t.shape[1], ho = t.shape[2], wo = t.shape[3];
  if (t.shape[0] != n) throw std::invalid_argument("conv_weight_grad: batch mismatch");
  if (conv_out_size(h, kh, stride, pad) != ho || conv_out_size(ww, kw, stride, pad) != wo)
    throw std::invalid_argument("conv_weight_grad: map size inconsistent");
  const Index k = ci * kh * kw, p = ho * wo;

  Tensor<S> gw = Tensor<S>::zeros({co, ci, kh, kw});
  Tensor<S> col({k, p});
  detail::RowMap<S> gm(gw.ptr(), co, k);
  for (Index i = 0; i < n; ++i) {
    detail::im2col(x.ptr() + i * ci * h * ww, ci, h, ww, kh, kw, stride, pad, ho, wo, col.ptr());
    detail::ConstRowMap<S> tm(t.ptr() + i * co * p, co, p);
    detail::ConstRowMap<S> cm(col.ptr(), k, p);
    gm.noalias() += tm * cm.transpose();
  }
  return gw;
}

template <typename S>
Var<S> conv_transpose2d(const Var<S>& t, const Var<S>& w, Index stride, Index pad, Index h_out,
                        Index w_out);
template <typename S>
Var<S> conv_weight_grad(const Var<S>& x, const Var<S>& t, Index stride, Index pad, Index kh,
                        Index kw);

template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& w, Index stride, Index pad) {
  Tensor<S> y = conv2d_fwd(x.value(), w.value(), stride, pad);
  const Index h = x.shape()[2], ww = x.shape()[3];
  const Index kh = w.shape()[2], kw = w.shape()[3];
  return make_op<S>(std::move(y), {x, w}, [x, w, stride, pad, h, ww, kh, kw](const Var<S>& g) {
    return std::vector<Var<S>>{conv_transpose2d(g, w, stride, pad, h, ww),
                               conv_weight_grad(x, g, stride, pad, kh, kw)};
  });
}

template <typename S>
Var<S> conv_transpose2d(const Var<S>& t, const Var<S>& w, Index stride, Index pad, Index h_out,
                        Index w_out) {
  Tensor<S> y = conv_transpose2d_fwd(t.value(), w.value(), stride, pad, h_out, w_out);
  const Index kh = w.shape()[2], kw = w.shape()[3];
  return make_op<S>(std::move(y), {t, w}, [t, w, stride, pad, kh, kw](const Var<S>& g) {
    // g plays the x role here (it has the transpose's output shape)
    return std::vector<Var<S>>{conv2d(g, w, stride, pad),
                               conv_weight_grad(g, t, stride, pad, kh, kw)};
  });
}

template <typename S>
Var<S> conv_weight_grad(const Var<S>& x, const Var<S>& t, Index stride, Index pad, Index kh,
                        Index kw) {
  Tensor<S> y = conv_weight_grad_fwd(x.value(), t.value(), stride, pad, kh, kw);
  const Index h = x.shape()[2], w = x.shape()[3];
  return make_op<S>(std::move(y), {x, t}, [x, t, stride, pad, h, w](const Var<S>& g) {
    // g has kernel shape and acts as the weight of both adjoints
    return std::vector<Var<S>>{conv_transpose2d(t, g, stride, pad, h, w),
                               conv2d(x, g, stride, pad)};
  });
}

}  // namespace healthygan
