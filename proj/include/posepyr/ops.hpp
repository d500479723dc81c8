#pragma once

#include "posepyr/parallel.hpp"
#include "posepyr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace posepyr {

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require(a.shape() == b.shape(),
          std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename T>
void require_nchw(const Tensor<T>& x, const char* op) {
  require(x.ndim() == 4, std::string(op) + ": expected NCHW input, got shape " + shape_str(x.shape()));
}

template <typename T, typename Expr>
void accumulate(const Tensor<T>& t, const Eigen::ArrayBase<Expr>& g) {
  if (t.requires_grad()) t.node()->ensure_grad() += g;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and structural ops

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  ArrayX<T> y = x.data().max(T(0));
  return make_result<T>(x.shape(), std::move(y), {x}, [x](detail::Node<T>& self) {
    detail::accumulate(x, (x.data() > T(0)).select(self.grad, T(0)));
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  return make_result<T>(a.shape(), a.data() + b.data(), {a, b}, [a, b](detail::Node<T>& self) {
    detail::accumulate(a, self.grad);
    detail::accumulate(b, self.grad);
  });
}

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
  return add(a, b);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  return make_result<T>(a.shape(), a.data() * b.data(), {a, b}, [a, b](detail::Node<T>& self) {
    detail::accumulate(a, self.grad * b.data());
    detail::accumulate(b, self.grad * a.data());
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
  return make_result<T>(x.shape(), x.data() * c, {x},
                        [x, c](detail::Node<T>& self) { detail::accumulate(x, self.grad * c); });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  ArrayX<T> y(1);
  y[0] = x.data().sum();
  return make_result<T>({}, std::move(y), {x}, [x](detail::Node<T>& self) {
    detail::accumulate(x, ArrayX<T>::Constant(x.numel(), self.grad[0]));
  });
}

/// Concatenates NCHW tensors along the channel axis, block-ordered.
template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs) {
  detail::require(!xs.empty(), "concat_channels: no inputs");
  for (const auto& x : xs) detail::require_nchw(x, "concat_channels");
  const Index n = xs[0].dim(0), h = xs[0].dim(2), w = xs[0].dim(3);
  Index c_total = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto& x = xs[i];
    detail::require(x.dim(0) == n, "concat_channels: batch extent mismatch at input " + std::to_string(i));
    detail::require(x.dim(2) == h, "concat_channels: height mismatch at input " + std::to_string(i));
    detail::require(x.dim(3) == w, "concat_channels: width mismatch at input " + std::to_string(i));
    c_total += x.dim(1);
  }
  const Index plane = h * w;
  ArrayX<T> y(n * c_total * plane);
  Index c_off = 0;
  for (const auto& x : xs) {
    const Index c = x.dim(1);
    for (Index b = 0; b < n; ++b) {
      y.segment((b * c_total + c_off) * plane, c * plane) = x.data().segment(b * c * plane, c * plane);
    }
    c_off += c;
  }
  return make_result<T>({n, c_total, h, w}, std::move(y), xs, [xs, n, c_total, plane](detail::Node<T>& self) {
    Index off = 0;
    for (const auto& x : xs) {
      const Index c = x.dim(1);
      if (x.requires_grad()) {
        auto& g = x.node()->ensure_grad();
        for (Index b = 0; b < n; ++b) {
          g.segment(b * c * plane, c * plane) += self.grad.segment((b * c_total + off) * plane, c * plane);
        }
      }
      off += c;
    }
  });
}

/// Channels [begin, end) of an NCHW tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, Index begin, Index end) {
  detail::require_nchw(x, "slice_channels");
  const Index n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  detail::require(0 <= begin && begin < end && end <= c,
                  "slice_channels: channel range [" + std::to_string(begin) + ", " + std::to_string(end) +
                      ") outside 0.." + std::to_string(c));
  const Index cs = end - begin;
  ArrayX<T> y(n * cs * plane);
  for (Index b = 0; b < n; ++b) {
    y.segment(b * cs * plane, cs * plane) = x.data().segment((b * c + begin) * plane, cs * plane);
  }
  return make_result<T>({n, cs, x.dim(2), x.dim(3)}, std::move(y), {x},
                        [x, n, c, cs, begin, plane](detail::Node<T>& self) {
                          if (!x.requires_grad()) return;
                          auto& g = x.node()->ensure_grad();
                          for (Index b = 0; b < n; ++b) {
                            g.segment((b * c + begin) * plane, cs * plane) += self.grad.segment(b * cs * plane, cs * plane);
                          }
                        });
}

/// Mean over all elements of (a - b)^2.
template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mse");
  detail::require(a.numel() > 0, "mse: empty operands");
  const T inv_n = T(1) / static_cast<T>(a.numel());
  ArrayX<T> diff = a.data() - b.data();
  ArrayX<T> y(1);
  y[0] = diff.square().sum() * inv_n;
  return make_result<T>({}, std::move(y), {a, b}, [a, b, diff, inv_n](detail::Node<T>& self) {
    const ArrayX<T> g = diff * (T(2) * inv_n * self.grad[0]);
    detail::accumulate(a, g);
    detail::accumulate(b, (-g).eval());
  });
}

/// Mean over all elements of mask * (pred - target)^2; target and mask are constants.
template <typename T>
Tensor<T> masked_mse(const Tensor<T>& pred, const Tensor<T>& target, const Tensor<T>& mask) {
  detail::require_same_shape(pred, target, "masked_mse");
  detail::require_same_shape(pred, mask, "masked_mse");
  detail::require(pred.numel() > 0, "masked_mse: empty operands");
  const T inv_n = T(1) / static_cast<T>(pred.numel());
  ArrayX<T> wdiff = (pred.data() - target.data()) * mask.data();
  ArrayX<T> y(1);
  y[0] = (wdiff * (pred.data() - target.data())).sum() * inv_n;
  return make_result<T>({}, std::move(y), {pred}, [pred, wdiff, inv_n](detail::Node<T>& self) {
    detail::accumulate(pred, (wdiff * (T(2) * inv_n * self.grad[0])).eval());
  });
}

// ---------------------------------------------------------------------------
// Convolutions

namespace detail {

inline Index conv_out_extent(Index in, Index kernel, Index stride, Index padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

/// cols[(c*K + ky)*K + kx][oy*wo + ox] = x[c][oy*s - p + ky][ox*s - p + kx] (zero outside).
template <typename T>
void im2col(const T* x, Index c, Index h, Index w, Index k, Index stride, Index pad, Index ho, Index wo, T* cols) {
  for (Index ci = 0; ci < c; ++ci) {
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        T* row = cols + ((ci * k + ky) * k + kx) * ho * wo;
        for (Index oy = 0; oy < ho; ++oy) {
          const Index iy = oy * stride - pad + ky;
          T* dst = row + oy * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* src = x + (ci * h + iy) * w;
          for (Index ox = 0; ox < wo; ++ox) {
            const Index ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters columns back, accumulating into x.
template <typename T>
void col2im(const T* cols, Index c, Index h, Index w, Index k, Index stride, Index pad, Index ho, Index wo, T* x) {
  for (Index ci = 0; ci < c; ++ci) {
    for (Index ky = 0; ky < k; ++ky) {
      for (Index kx = 0; kx < k; ++kx) {
        const T* row = cols + ((ci * k + ky) * k + kx) * ho * wo;
        for (Index oy = 0; oy < ho; ++oy) {
          const Index iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          T* dst = x + (ci * h + iy) * w;
          const T* src = row + oy * wo;
          for (Index ox = 0; ox < wo; ++ox) {
            const Index ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
using RowMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstRowMap = Eigen::Map<const RowMatrix<T>>;

}  // namespace detail

/// 2-D cross-correlation. input N x I x H x W, weight O x I x K x K, optional bias of length O.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, int stride, int padding) {
  using namespace detail;
  require_nchw(input, "conv2d");
  require(weight.ndim() == 4, "conv2d: weight must be O x I x K x K, got " + shape_str(weight.shape()));
  require(weight.dim(2) == weight.dim(3), "conv2d: kernel must be square, got " + shape_str(weight.shape()));
  require(input.dim(1) == weight.dim(1), "conv2d: input channels (" + std::to_string(input.dim(1)) +
                                             ") do not match weight in-channels (" + std::to_string(weight.dim(1)) + ")");
  require(stride >= 1, "conv2d: stride must be >= 1");
  require(padding >= 0, "conv2d: padding must be >= 0");
  if (bias.defined()) {
    require(bias.ndim() == 1 && bias.dim(0) == weight.dim(0),
            "conv2d: bias length " + shape_str(bias.shape()) + " does not match out-channels " +
                std::to_string(weight.dim(0)));
  }
  const Index n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const Index o = weight.dim(0), k = weight.dim(2);
  require(h + 2 * padding >= k, "conv2d: input height " + std::to_string(h) + " too small for kernel");
  require(w + 2 * padding >= k, "conv2d: input width " + std::to_string(w) + " too small for kernel");
  const Index ho = conv_out_extent(h, k, stride, padding), wo = conv_out_extent(w, k, stride, padding);
  const Index ckk = c * k * k, out_plane = ho * wo;
  const bool pointwise = (k == 1 && stride == 1 && padding == 0);

  ArrayX<T> y(n * o * out_plane);
  ConstRowMap<T> wmat(weight.ptr(), o, ckk);
  parallel_for(n, [&](long b) {
    RowMap<T> yb(y.data() + b * o * out_plane, o, out_plane);
    const T* xb = input.ptr() + b * c * h * w;
    if (pointwise) {
      yb.noalias() = wmat * ConstRowMap<T>(xb, ckk, out_plane);
    } else {
      RowMatrix<T> cols(ckk, out_plane);
      im2col(xb, c, h, w, k, stride, padding, ho, wo, cols.data());
      yb.noalias() = wmat * cols;
    }
    if (bias.defined()) yb.colwise() += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias.ptr(), o);
  });

  std::vector<Tensor<T>> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<T>({n, o, ho, wo}, std::move(y), inputs, [=](detail::Node<T>& self) {
    const T* gy = self.grad.data();
    ConstRowMap<T> wm(weight.ptr(), o, ckk);
    std::vector<RowMatrix<T>> gw_parts(weight.requires_grad() ? n : 0);
    T* gx = input.requires_grad() ? input.node()->ensure_grad().data() : nullptr;
    parallel_for(n, [&](long b) {
      ConstRowMap<T> gyb(gy + b * o * out_plane, o, out_plane);
      const T* xb = input.ptr() + b * c * h * w;
      RowMatrix<T> cols;
      if (!pointwise && weight.requires_grad()) {
        cols.resize(ckk, out_plane);
        im2col(xb, c, h, w, k, stride, padding, ho, wo, cols.data());
      }
      if (weight.requires_grad()) {
        gw_parts[b] = pointwise ? RowMatrix<T>(gyb * ConstRowMap<T>(xb, ckk, out_plane).transpose())
                                : RowMatrix<T>(gyb * cols.transpose());
      }
      if (gx) {
        if (pointwise) {
          RowMap<T>(gx + b * c * h * w, ckk, out_plane).noalias() += wm.transpose() * gyb;
        } else {
          RowMatrix<T> gcols = wm.transpose() * gyb;
          col2im(gcols.data(), c, h, w, k, stride, padding, ho, wo, gx + b * c * h * w);
        }
      }
    });
    if (weight.requires_grad()) {
      RowMap<T> gw(weight.node()->ensure_grad().data(), o, ckk);
      for (const auto& part : gw_parts) gw += part;
    }
    if (bias.defined() && bias.requires_grad()) {
      auto& gb = bias.node()->ensure_grad();
      for (Index b = 0; b < n; ++b) gb += ConstRowMap<T>(gy + b * o * out_plane, o, out_plane).rowwise().sum().array();
    }
  });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, int stride = 1, int padding = 0) {
  return conv2d(input, weight, Tensor<T>(), stride, padding);
}

/// Transposed convolution (adjoint of conv2d w.r.t. its input). weight is
/// I x O x K x K: I input channels of this op, O output channels.
/// Output extent (H - 1) * stride - 2 * padding + K.
template <typename T>
Tensor<T> transposed_conv2d(const Tensor<T>& input, const Tensor<T>& weight, int stride = 2, int padding = 1) {
  using namespace detail;
  require_nchw(input, "transposed_conv2d");
  require(weight.ndim() == 4, "transposed_conv2d: weight must be I x O x K x K, got " + shape_str(weight.shape()));
  require(weight.dim(2) == weight.dim(3), "transposed_conv2d: kernel must be square");
  require(input.dim(1) == weight.dim(0), "transposed_conv2d: input channels (" + std::to_string(input.dim(1)) +
                                             ") do not match weight in-channels (" + std::to_string(weight.dim(0)) +
                                             ")");
  require(stride >= 1, "transposed_conv2d: stride must be >= 1");
  require(padding >= 0, "transposed_conv2d: padding must be >= 0");
  const Index n = input.dim(0), ci = input.dim(1), h = input.dim(2), w = input.dim(3);
  const Index co = weight.dim(1), k = weight.dim(2);
  const Index ho = (h - 1) * stride - 2 * padding + k, wo = (w - 1) * stride - 2 * padding + k;
  require(ho > 0 && wo > 0, "transposed_conv2d: non-positive output size " + std::to_string(ho) + "x" +
                                std::to_string(wo));
  const Index cokk = co * k * k, in_plane = h * w, out_plane = ho * wo;

  ArrayX<T> y = ArrayX<T>::Zero(n * co * out_plane);
  ConstRowMap<T> wmat(weight.ptr(), ci, cokk);
  parallel_for(n, [&](long b) {
    RowMatrix<T> cols = wmat.transpose() * ConstRowMap<T>(input.ptr() + b * ci * in_plane, ci, in_plane);
    col2im(cols.data(), co, ho, wo, k, stride, padding, h, w, y.data() + b * co * out_plane);
  });

  return make_result<T>({n, co, ho, wo}, std::move(y), {input, weight}, [=](detail::Node<T>& self) {
    ConstRowMap<T> wm(weight.ptr(), ci, cokk);
    std::vector<RowMatrix<T>> gw_parts(weight.requires_grad() ? n : 0);
    T* gx = input.requires_grad() ? input.node()->ensure_grad().data() : nullptr;
    parallel_for(n, [&](long b) {
      RowMatrix<T> gcols(cokk, in_plane);
      im2col(self.grad.data() + b * co * out_plane, co, ho, wo, k, stride, padding, h, w, gcols.data());
      if (gx) RowMap<T>(gx + b * ci * in_plane, ci, in_plane).noalias() += wm * gcols;
      if (weight.requires_grad()) {
        gw_parts[b] = ConstRowMap<T>(input.ptr() + b * ci * in_plane, ci, in_plane) * gcols.transpose();
      }
    });
    if (weight.requires_grad()) {
      RowMap<T> gw(weight.node()->ensure_grad().data(), ci, cokk);
      for (const auto& part : gw_parts) gw += part;
    }
  });
}

// ---------------------------------------------------------------------------
// Batch normalization

enum class Mode { kTrain, kEval };

/// Per-channel normalization over batch x height x width. In train mode uses
/// batch statistics and updates the running buffers in place (biased variance
/// for normalization, unbiased for the running estimate).
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta, Tensor<T> running_mean,
                      Tensor<T> running_var, Mode mode, T momentum = T(0.1), T eps = T(1e-5)) {
  using namespace detail;
  require_nchw(input, "batchnorm2d");
  const Index n = input.dim(0), c = input.dim(1), plane = input.dim(2) * input.dim(3);
  require(gamma.numel() == c, "batchnorm2d: gamma length " + std::to_string(gamma.numel()) +
                                  " does not match channels " + std::to_string(c));
  require(beta.numel() == c, "batchnorm2d: beta length " + std::to_string(beta.numel()) + " does not match channels " +
                                 std::to_string(c));
  require(running_mean.numel() == c && running_var.numel() == c, "batchnorm2d: running stats length mismatch");
  const Index m = n * plane;
  require(m > 0, "batchnorm2d: zero batch x spatial extent");

  ArrayX<T> mean(c), invstd(c);
  if (mode == Mode::kTrain) {
    for (Index ch = 0; ch < c; ++ch) {
      T s = 0;
      for (Index b = 0; b < n; ++b) s += input.data().segment((b * c + ch) * plane, plane).sum();
      const T mu = s / static_cast<T>(m);
      T ss = 0;
      for (Index b = 0; b < n; ++b) ss += (input.data().segment((b * c + ch) * plane, plane) - mu).square().sum();
      const T var = ss / static_cast<T>(m);
      mean[ch] = mu;
      invstd[ch] = T(1) / std::sqrt(var + eps);
      const T unbiased = m > 1 ? ss / static_cast<T>(m - 1) : var;
      running_mean.data()[ch] = (T(1) - momentum) * running_mean.data()[ch] + momentum * mu;
      running_var.data()[ch] = (T(1) - momentum) * running_var.data()[ch] + momentum * unbiased;
    }
  } else {
    mean = running_mean.data();
    invstd = (running_var.data() + eps).rsqrt();
  }

  ArrayX<T> xhat(input.numel());
  ArrayX<T> y(input.numel());
  for (Index b = 0; b < n; ++b) {
    for (Index ch = 0; ch < c; ++ch) {
      const Index off = (b * c + ch) * plane;
      xhat.segment(off, plane) = (input.data().segment(off, plane) - mean[ch]) * invstd[ch];
      y.segment(off, plane) = xhat.segment(off, plane) * gamma.data()[ch] + beta.data()[ch];
    }
  }

  const bool train = mode == Mode::kTrain;
  return make_result<T>(input.shape(), std::move(y), {input, gamma, beta}, [=](detail::Node<T>& self) {
    const ArrayX<T>& gy = self.grad;
    ArrayX<T> sum_gy = ArrayX<T>::Zero(c), sum_gy_xhat = ArrayX<T>::Zero(c);
    for (Index b = 0; b < n; ++b) {
      for (Index ch = 0; ch < c; ++ch) {
        const Index off = (b * c + ch) * plane;
        sum_gy[ch] += gy.segment(off, plane).sum();
        sum_gy_xhat[ch] += (gy.segment(off, plane) * xhat.segment(off, plane)).sum();
      }
    }
    if (gamma.requires_grad()) gamma.node()->ensure_grad() += sum_gy_xhat;
    if (beta.requires_grad()) beta.node()->ensure_grad() += sum_gy;
    if (!input.requires_grad()) return;
    auto& gx = input.node()->ensure_grad();
    const T inv_m = T(1) / static_cast<T>(m);
    for (Index b = 0; b < n; ++b) {
      for (Index ch = 0; ch < c; ++ch) {
        const Index off = (b * c + ch) * plane;
        const T scale_ = gamma.data()[ch] * invstd[ch];
        if (train) {
          gx.segment(off, plane) +=
              scale_ * (gy.segment(off, plane) - sum_gy[ch] * inv_m - xhat.segment(off, plane) * (sum_gy_xhat[ch] * inv_m));
        } else {
          gx.segment(off, plane) += scale_ * gy.segment(off, plane);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Bilinear resampling

namespace detail {

struct LinearTap {
  Index i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

/// Half-pixel (align-corners-false) source taps for resizing `in` samples to `out`.
inline std::vector<LinearTap> bilinear_taps(Index in, Index out) {
  std::vector<LinearTap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (Index i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    Index i0 = static_cast<Index>(src);
    if (i0 > in - 1) i0 = in - 1;
    const Index i1 = i0 < in - 1 ? i0 + 1 : i0;
    taps[i] = {i0, i1, src - static_cast<double>(i0)};
    if (i1 == i0) taps[i].w1 = 0;
  }
  return taps;
}

template <typename T>
void resize_planes(const T* x, Index planes, Index h, Index w, Index oh, Index ow, T* y) {
  const auto ty = bilinear_taps(h, oh), tx = bilinear_taps(w, ow);
  for (Index p = 0; p < planes; ++p) {
    const T* src = x + p * h * w;
    T* dst = y + p * oh * ow;
    for (Index i = 0; i < oh; ++i) {
      const T wy1 = static_cast<T>(ty[i].w1), wy0 = T(1) - wy1;
      const T* r0 = src + ty[i].i0 * w;
      const T* r1 = src + ty[i].i1 * w;
      for (Index j = 0; j < ow; ++j) {
        const T wx1 = static_cast<T>(tx[j].w1), wx0 = T(1) - wx1;
        dst[i * ow + j] = wy0 * (wx0 * r0[tx[j].i0] + wx1 * r0[tx[j].i1]) + wy1 * (wx0 * r1[tx[j].i0] + wx1 * r1[tx[j].i1]);
      }
    }
  }
}

template <typename T>
void resize_planes_adjoint(const T* gy, Index planes, Index h, Index w, Index oh, Index ow, T* gx) {
  const auto ty = bilinear_taps(h, oh), tx = bilinear_taps(w, ow);
  for (Index p = 0; p < planes; ++p) {
    const T* src = gy + p * oh * ow;
    T* dst = gx + p * h * w;
    for (Index i = 0; i < oh; ++i) {
      const T wy1 = static_cast<T>(ty[i].w1), wy0 = T(1) - wy1;
      T* r0 = dst + ty[i].i0 * w;
      T* r1 = dst + ty[i].i1 * w;
      for (Index j = 0; j < ow; ++j) {
        const T g = src[i * ow + j];
        const T wx1 = static_cast<T>(tx[j].w1), wx0 = T(1) - wx1;
        r0[tx[j].i0] += wy0 * wx0 * g;
        r0[tx[j].i1] += wy0 * wx1 * g;
        r1[tx[j].i0] += wy1 * wx0 * g;
        r1[tx[j].i1] += wy1 * wx1 * g;
      }
    }
  }
}

}  // namespace detail

/// Bilinear resize of the trailing two axes with the half-pixel convention;
/// works for both up- and down-sampling and is differentiable.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, Index out_h, Index out_w) {
  detail::require(x.ndim() >= 2, "resize_bilinear: need at least 2 axes, got " + shape_str(x.shape()));
  detail::require(out_h > 0 && out_w > 0, "resize_bilinear: output size must be positive");
  const Index h = x.shape()[x.ndim() - 2], w = x.shape()[x.ndim() - 1];
  detail::require(h > 0 && w > 0, "resize_bilinear: empty input plane");
  const Index planes = x.numel() / (h * w);
  Shape shape = x.shape();
  shape[shape.size() - 2] = out_h;
  shape[shape.size() - 1] = out_w;
  ArrayX<T> y(planes * out_h * out_w);
  detail::resize_planes(x.ptr(), planes, h, w, out_h, out_w, y.data());
  return make_result<T>(std::move(shape), std::move(y), {x}, [=](detail::Node<T>& self) {
    if (!x.requires_grad()) return;
    detail::resize_planes_adjoint(self.grad.data(), planes, h, w, out_h, out_w, x.node()->ensure_grad().data());
  });
}

template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, Index out_h, Index out_w) {
  detail::require(x.ndim() >= 2, "bilinear_upsample: need at least 2 axes, got " + shape_str(x.shape()));
  const Index h = x.shape()[x.ndim() - 2], w = x.shape()[x.ndim() - 1];
  detail::require(out_h >= h, "bilinear_upsample: out_h " + std::to_string(out_h) + " < input height " + std::to_string(h));
  detail::require(out_w >= w, "bilinear_upsample: out_w " + std::to_string(out_w) + " < input width " + std::to_string(w));
  return resize_bilinear(x, out_h, out_w);
}

}  // namespace posepyr
