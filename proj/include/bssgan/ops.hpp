#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "bssgan/gemm.hpp"
#include "bssgan/rng.hpp"
#include "bssgan/tape.hpp"
#include "bssgan/tensor.hpp"

namespace bssgan {

inline constexpr double kLogClamp = 1e-12;  // ln argument floor
inline constexpr double kBnEps = 1e-5;      // batch-norm variance clamp

enum class Mode { kTrain, kInfer };

// ---------------------------------------------------------------------------
// Convolution geometry ("same" padding, TensorFlow pad split: the odd pixel
// goes to the bottom/right). Kernel layout (kh, kw, cin, cout).
// ---------------------------------------------------------------------------

struct ConvGeom {
  int n, h, w, cin, cout, kh, kw, stride;
  int oh, ow, pt, pl;

  ConvGeom(int n_, int h_, int w_, int cin_, int cout_, int kh_, int kw_, int s)
      : n(n_), h(h_), w(w_), cin(cin_), cout(cout_), kh(kh_), kw(kw_), stride(s) {
    check(s == 1 || s == 2, "conv stride must be 1 or 2");
    oh = (h + s - 1) / s;
    ow = (w + s - 1) / s;
    pt = std::max((oh - 1) * s + kh - h, 0) / 2;
    pl = std::max((ow - 1) * s + kw - w, 0) / 2;
  }
  int patch() const { return kh * kw * cin; }
  std::size_t rows() const { return std::size_t(n) * oh * ow; }
};

template <class T>
std::vector<T> im2col(const Tensor<T>& x, const ConvGeom& g) {
  std::vector<T> col(g.rows() * g.patch(), T(0));
  const T* xd = x.data.data();
  T* cd = col.data();
  for (int b = 0; b < g.n; ++b) {
    const T* xb = xd + std::size_t(b) * g.h * g.w * g.cin;
    for (int oy = 0; oy < g.oh; ++oy)
      for (int ox = 0; ox < g.ow; ++ox) {
        T* row = cd + ((std::size_t(b) * g.oh + oy) * g.ow + ox) * g.patch();
        for (int ky = 0; ky < g.kh; ++ky) {
          int iy = oy * g.stride - g.pt + ky;
          if (iy < 0 || iy >= g.h) continue;
          for (int kx = 0; kx < g.kw; ++kx) {
            int ix = ox * g.stride - g.pl + kx;
            if (ix < 0 || ix >= g.w) continue;
            const T* src = xb + (std::size_t(iy) * g.w + ix) * g.cin;
            T* dst = row + (ky * g.kw + kx) * g.cin;
            for (int c = 0; c < g.cin; ++c) dst[c] = src[c];
          }
        }
      }
  }
  return col;
}

template <class T>
void col2im_acc(const std::vector<T>& col, const ConvGeom& g, Tensor<T>& x) {
  const T* cd = col.data();
  T* xd = x.data.data();
  for (int b = 0; b < g.n; ++b) {
    T* xb = xd + std::size_t(b) * g.h * g.w * g.cin;
    for (int oy = 0; oy < g.oh; ++oy)
      for (int ox = 0; ox < g.ow; ++ox) {
        const T* row = cd + ((std::size_t(b) * g.oh + oy) * g.ow + ox) * g.patch();
        for (int ky = 0; ky < g.kh; ++ky) {
          int iy = oy * g.stride - g.pt + ky;
          if (iy < 0 || iy >= g.h) continue;
          for (int kx = 0; kx < g.kw; ++kx) {
            int ix = ox * g.stride - g.pl + kx;
            if (ix < 0 || ix >= g.w) continue;
            T* dst = xb + (std::size_t(iy) * g.w + ix) * g.cin;
            const T* src = row + (ky * g.kw + kx) * g.cin;
            for (int c = 0; c < g.cin; ++c) dst[c] += src[c];
          }
        }
      }
  }
}

template <class T>
Tensor<T> conv_fwd(const Tensor<T>& x, const Tensor<T>& w, const T* bias,
                   const ConvGeom& g, std::vector<T>* col_out = nullptr) {
  std::vector<T> col = im2col(x, g);
  Tensor<T> y({g.n, g.oh, g.ow, g.cout});
  int rows = static_cast<int>(g.rows());
  gemm(false, false, rows, g.cout, g.patch(), T(1), col.data(), g.patch(),
       w.data.data(), g.cout, T(0), y.data.data(), g.cout);
  if (bias) {
    T* yd = y.data.data();
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < g.cout; ++c) yd[std::size_t(r) * g.cout + c] += bias[c];
  }
  if (col_out) *col_out = std::move(col);
  return y;
}

template <class T>
Tensor<T> conv_bwd_input(const Tensor<T>& dy, const Tensor<T>& w, const ConvGeom& g) {
  int rows = static_cast<int>(g.rows());
  std::vector<T> dcol(g.rows() * g.patch());
  gemm(false, true, rows, g.patch(), g.cout, T(1), dy.data.data(), g.cout,
       w.data.data(), g.cout, T(0), dcol.data(), g.patch());
  Tensor<T> dx({g.n, g.h, g.w, g.cin});
  col2im_acc(dcol, g, dx);
  return dx;
}

// dw += im2col(x)^T * dy
template <class T>
void conv_bwd_kernel(const std::vector<T>& col, const Tensor<T>& dy,
                     const ConvGeom& g, Tensor<T>& dw_acc) {
  int rows = static_cast<int>(g.rows());
  std::vector<T> dw(std::size_t(g.patch()) * g.cout, T(0));
  gemm(true, false, g.patch(), g.cout, rows, T(1), col.data(), g.patch(),
       dy.data.data(), g.cout, T(0), dw.data(), g.cout);
  for (std::size_t i = 0; i < dw.size(); ++i) dw_acc.data[i] += dw[i];
}

namespace detail {

template <class T>
void axpy(const Tensor<T>& src, Tensor<T>& dst) {
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

// Sum dy over all but the channel (last) axis into bias-shaped acc.
template <class T>
void channel_sum_acc(const Tensor<T>& dy, int channels, Tensor<T>& acc) {
  std::size_t rows = dy.numel() / channels;
  for (std::size_t r = 0; r < rows; ++r)
    for (int c = 0; c < channels; ++c) acc.data[c] += dy.data[r * channels + c];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Tape ops
// ---------------------------------------------------------------------------

/// 2-D convolution, NHWC, 3x3-or-any kernels (kh,kw,cin,cout), "same" padding.
template <class T>
NodeId conv2d(Tape<T>& tp, NodeId x, NodeId w, NodeId b, int stride) {
  const Tensor<T>& xv = tp.value(x);
  const Tensor<T>& wv = tp.value(w);
  check(xv.rank() == 4, "conv2d input must be rank 4 (NHWC)");
  check(wv.rank() == 4, "conv2d kernels must be rank 4 (kh,kw,cin,cout)");
  check(wv.dim(2) == xv.dim(3),
        "conv2d: input channels " + std::to_string(xv.dim(3)) +
            " do not match kernel channels " + std::to_string(wv.dim(2)));
  check(tp.value(b).numel() == std::size_t(wv.dim(3)),
        "conv2d: bias length must equal filter count");
  ConvGeom g(xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3), wv.dim(3), wv.dim(0),
             wv.dim(1), stride);
  auto col = std::make_shared<std::vector<T>>();
  Tensor<T> y = conv_fwd(xv, wv, tp.value(b).data.data(), g, col.get());
  NodeId out = static_cast<NodeId>(tp.size());
  return tp.emit(std::move(y), {x, w, b}, [x, w, b, out, g, col](Tape<T>& t) {
    const Tensor<T>& gy = t.grad(out);
    if (t.requires_grad(x)) detail::axpy(conv_bwd_input(gy, t.value(w), g), t.grad(x));
    if (t.requires_grad(w)) conv_bwd_kernel(*col, gy, g, t.grad(w));
    if (t.requires_grad(b)) detail::channel_sum_acc(gy, g.cout, t.grad(b));
  });
}

/// Transposed convolution ("same"-style): output spatial = input x stride.
/// Kernels (kh,kw,cout,cin); forward is the adjoint of a matching conv2d.
template <class T>
NodeId transposed_conv2d(Tape<T>& tp, NodeId x, NodeId w, NodeId b, int stride) {
  const Tensor<T>& xv = tp.value(x);
  const Tensor<T>& wv = tp.value(w);
  check(xv.rank() == 4, "transposed_conv2d input must be rank 4 (NHWC)");
  check(wv.rank() == 4, "transposed_conv2d kernels must be rank 4 (kh,kw,cout,cin)");
  check(wv.dim(3) == xv.dim(3),
        "transposed_conv2d: input channels do not match kernel channels");
  int cout = wv.dim(2);
  check(tp.value(b).numel() == std::size_t(cout),
        "transposed_conv2d: bias length must equal output channels");
  // Geometry of the conv this op is adjoint to: (n, h*s, w*s, cout) -> (n, h, w, cin).
  ConvGeom g(xv.dim(0), xv.dim(1) * stride, xv.dim(2) * stride, cout, xv.dim(3),
             wv.dim(0), wv.dim(1), stride);
  Tensor<T> y = conv_bwd_input(xv, wv, g);
  {
    const T* bias = tp.value(b).data.data();
    std::size_t rows = y.numel() / cout;
    for (std::size_t r = 0; r < rows; ++r)
      for (int c = 0; c < cout; ++c) y.data[r * cout + c] += bias[c];
  }
  NodeId out = static_cast<NodeId>(tp.size());
  return tp.emit(std::move(y), {x, w, b}, [x, w, b, out, g, cout](Tape<T>& t) {
    const Tensor<T>& gy = t.grad(out);
    if (t.requires_grad(x))
      detail::axpy(conv_fwd(gy, t.value(w), static_cast<const T*>(nullptr), g), t.grad(x));
    if (t.requires_grad(w)) {
      std::vector<T> col = im2col(gy, g);
      conv_bwd_kernel(col, t.value(x), g, t.grad(w));
    }
    if (t.requires_grad(b)) detail::channel_sum_acc(gy, cout, t.grad(b));
  });
}

/// Fully connected layer: x (N,in) * w (in,out) + b (out).
template <class T>
NodeId dense(Tape<T>& tp, NodeId x, NodeId w, NodeId b) {
  const Tensor<T>& xv = tp.value(x);
  const Tensor<T>& wv = tp.value(w);
  check(xv.rank() == 2 && wv.rank() == 2, "dense expects 2-D input and weights");
  check(xv.dim(1) == wv.dim(0), "dense: input width " + std::to_string(xv.dim(1)) +
                                    " does not match weight rows " + std::to_string(wv.dim(0)));
  int n = xv.dim(0), in = xv.dim(1), outw = wv.dim(1);
  check(tp.value(b).numel() == std::size_t(outw), "dense: bias length mismatch");
  Tensor<T> y({n, outw});
  gemm(false, false, n, outw, in, T(1), xv.data.data(), in, wv.data.data(), outw,
       T(0), y.data.data(), outw);
  const T* bias = tp.value(b).data.data();
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < outw; ++c) y.data[std::size_t(r) * outw + c] += bias[c];
  NodeId out = static_cast<NodeId>(tp.size());
  return tp.emit(std::move(y), {x, w, b}, [x, w, b, out, n, in, outw](Tape<T>& t) {
    const Tensor<T>& gy = t.grad(out);
    if (t.requires_grad(x)) {
      Tensor<T> dx({n, in});
      gemm(false, true, n, in, outw, T(1), gy.data.data(), outw,
           t.value(w).data.data(), outw, T(0), dx.data.data(), in);
      detail::axpy(dx, t.grad(x));
    }
    if (t.requires_grad(w)) {
      Tensor<T> dw({in, outw});
      gemm(true, false, in, outw, n, T(1), t.value(x).data.data(), in,
           gy.data.data(), outw, T(0), dw.data.data(), outw);
      detail::axpy(dw, t.grad(w));
    }
    if (t.requires_grad(b)) detail::channel_sum_acc(gy, outw, t.grad(b));
  });
}

template <class T>
NodeId reshape(Tape<T>& tp, NodeId x, Shape shape) {
  const Tensor<T>& xv = tp.value(x);
  check(shape_numel(shape) == xv.numel(), "reshape: element count mismatch");
  Tensor<T> y(shape, xv.data);
  NodeId out = static_cast<NodeId>(tp.size());
  return tp.emit(std::move(y), {x}, [x, out](Tape<T>& t) {
    const Tensor<T>& gy = t.grad(out);
    Tensor<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += gy.data[i];
  });
}

template <class T>
NodeId flatten(Tape<T>& tp, NodeId x) {
  const Tensor<T>& xv = tp.value(x);
  int n = xv.dim(0);
  return reshape(tp, x, {n, static_cast<int>(xv.numel()) / n});
}

// ---------------------------------------------------------------------------
// Batch normalization (channel = last axis; statistics over all other axes)
// ---------------------------------------------------------------------------

/// Non-owning view of a layer's running statistics; mutated by the forward
/// pass in train mode.
template <class T>
struct BnRunning {
  Tensor<T>* mean = nullptr;
  Tensor<T>* var = nullptr;
};

template <class T>
NodeId batch_norm(Tape<T>& tp, NodeId x, NodeId gamma, NodeId beta,
                  BnRunning<T> running, T momentum, Mode mode) {
  const Tensor<T>& xv = tp.value(x);
  int c = xv.dim(xv.rank() - 1);
  std::size_t rows = xv.numel() / c;
  check(tp.value(gamma).numel() == std::size_t(c) &&
            tp.value(beta).numel() == std::size_t(c),
        "batch_norm: gamma/beta must be channel-sized");

  auto mean = std::make_shared<std::vector<T>>(c, T(0));
  auto inv_std = std::make_shared<std::vector<T>>(c, T(0));
  if (mode == Mode::kTrain) {
    std::vector<T> var(c, T(0));
    for (std::size_t r = 0; r < rows; ++r)
      for (int j = 0; j < c; ++j) (*mean)[j] += xv.data[r * c + j];
    for (int j = 0; j < c; ++j) (*mean)[j] /= T(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (int j = 0; j < c; ++j) {
        T d = xv.data[r * c + j] - (*mean)[j];
        var[j] += d * d;
      }
    for (int j = 0; j < c; ++j) var[j] /= T(rows);
    for (int j = 0; j < c; ++j) (*inv_std)[j] = T(1) / std::sqrt(var[j] + T(kBnEps));
    if (running.mean) {
      // running <- momentum * running + (1 - momentum) * batch
      for (int j = 0; j < c; ++j) {
        running.mean->data[j] = momentum * running.mean->data[j] + (T(1) - momentum) * (*mean)[j];
        running.var->data[j] = momentum * running.var->data[j] + (T(1) - momentum) * var[j];
      }
    }
  } else {
    check(running.mean != nullptr, "batch_norm: inference mode requires running stats");
    for (int j = 0; j < c; ++j) {
      (*mean)[j] = running.mean->data[j];
      (*inv_std)[j] = T(1) / std::sqrt(running.var->data[j] + T(kBnEps));
    }
  }

  const T* gm = tp.value(gamma).data.data();
  const T* bt = tp.value(beta).data.data();
  Tensor<T> y(xv.shape);
  for (std::size_t r = 0; r < rows; ++r)
    for (int j = 0; j < c; ++j) {
      T xhat = (xv.data[r * c + j] - (*mean)[j]) * (*inv_std)[j];
      y.data[r * c + j] = gm[j] * xhat + bt[j];
    }

  NodeId out = static_cast<NodeId>(tp.size());
  bool train = mode == Mode::kTrain;
  return tp.emit(std::move(y), {x, gamma, beta},
                 [x, gamma, beta, out, mean, inv_std, c, rows, train](Tape<T>& t) {
    const Tensor<T>& gy = t.grad(out);
    const Tensor<T>& xv2 = t.value(x);
    const T* gm2 = t.value(gamma).data.data();
    std::vector<T> sum_dy(c, T(0)), sum_dy_xhat(c, T(0));
    for (std::size_t r = 0; r < rows; ++r)
      for (int j = 0; j < c; ++j) {
        T xhat = (xv2.data[r * c + j] - (*mean)[j]) * (*inv_std)[j];
        sum_dy[j] += gy.data[r * c + j];
        sum_dy_xhat[j] += gy.data[r * c + j] * xhat;
      }
    if (t.requires_grad(gamma))
      for (int j = 0; j < c; ++j) t.grad(gamma).data[j] += sum_dy_xhat[j];
    if (t.requires_grad(beta))
      for (int j = 0; j < c; ++j) t.grad(beta).data[j] += sum_dy[j];
    if (t.requires_grad(x)) {
      Tensor<T>& gx = t.grad(x);
      if (train) {
        T inv_m = T(1) / T(rows);
        for (std::size_t r = 0; r < rows; ++r)
          for (int j = 0; j < c; ++j) {
            T xhat = (xv2.data[r * c + j] - (*mean)[j]) * (*inv_std)[j];
            gx.data[r * c + j] += gm2[j] * (*inv_std)[j] *
                (gy.data[r * c + j] - inv_m * sum_dy[j] - inv_m * xhat * sum_dy_xhat[j]);
          }
      } else {
        for (std::size_t r = 0; r < rows; ++r)
          for (int j = 0; j < c; ++j)
            gx.data[r * c + j] += gm2[j] * (*inv_std)[j] * gy.data[r * c + j];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Dropout (inverted: inference is the identity)
// ---------------------------------------------------------------------------

template <class T>
NodeId dropout(Tape<T>& tp, NodeId x, double rate, Mode mode, Rng& rng) {
  check(rate >= 0.0 && rate < 1.0, "dropout rate must be in [0,1)");
  const Tensor<T>& xv = tp.value(x);
  if (mode == Mode::kInfer || rate == 0.0) {
    NodeId out = static_cast<NodeId>(tp.size());
    return tp.emit(Tensor<T>(xv.shape, xv.data), {x}, [x, out](Tape<T>& t) {
      detail::axpy(t.grad(out), t.grad(x));
    });
  }
  T scale = T(1.0 / (1.0 - rate));
  auto mask = std::make_shared<std::vector<std::uint8_t>>(xv.numel());
  Tensor<T> y(xv.shape);
  for (std::size_t i = 0; i < xv.numel(); ++i) {
    bool keep = rng.uniform() >= rate;
    (*mask)[i] = keep;
    y.data[i] = keep ? xv.data[i] * scale : T(0);
  }
  NodeId out = static_cast<NodeId>(tp.size());
  return tp.emit(std::move(y), {x}, [x, out, mask, scale](Tape<T>& t) {
    const Tensor<T>& gy = t.grad(out);
    Tensor<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < gx.data.size(); ++i)
      if ((*mask)[i]) gx.data[i] += gy.data[i] * scale;
  });
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

template <class T, class F, class DF>
NodeId elementwise(Tape<T>& tp, NodeId x, F f, DF df) {
  const Tensor<T>& xv = tp.value(x);
  Tensor<T> y(xv.shape);
  for (std::size_t i = 0; i < xv.numel(); ++i) y.data[i] = f(xv.data[i]);
  NodeId out = static_cast<NodeId>(tp.size());
  return tp.emit(std::move(y), {x}, [x, out, df](Tape<T>& t) {
    const Tensor<T>& gy = t.grad(out);
    const Tensor<T>& xv2 = t.value(x);
    const Tensor<T>& yv = t.value(out);
    Tensor<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < gx.data.size(); ++i)
      gx.data[i] += gy.data[i] * df(xv2.data[i], yv.data[i]);
  });
}

template <class T>
NodeId leaky_relu(Tape<T>& tp, NodeId x, T alpha) {
  return elementwise(
      tp, x, [alpha](T v) { return v >= T(0) ? v : alpha * v; },
      [alpha](T v, T) { return v >= T(0) ? T(1) : alpha; });
}

template <class T>
NodeId relu(Tape<T>& tp, NodeId x) {
  return leaky_relu(tp, x, T(0));
}

template <class T>
NodeId tanh_act(Tape<T>& tp, NodeId x) {
  return elementwise(
      tp, x, [](T v) { return std::tanh(v); },
      [](T, T y) { return T(1) - y * y; });
}

/// ln(max(v, 1e-12)); the clamp keeps Eq-style -ln(p) terms finite at p -> 0.
template <class T>
NodeId log_clamped(Tape<T>& tp, NodeId x) {
  return elementwise(
      tp, x, [](T v) { return std::log(std::max(v, T(kLogClamp))); },
      [](T v, T) { return v > T(kLogClamp) ? T(1) / v : T(0); });
}

template <class T>
NodeId one_minus(Tape<T>& tp, NodeId x) {
  return elementwise(
      tp, x, [](T v) { return T(1) - v; }, [](T, T) { return T(-1); });
}

template <class T>
NodeId scale(Tape<T>& tp, NodeId x, T s) {
  return elementwise(
      tp, x, [s](T v) { return s * v; }, [s](T, T) { return s; });
}

template <class T>
NodeId pow_const(Tape<T>& tp, NodeId x, T p) {
  return elementwise(
      tp, x, [p](T v) { return std::pow(v, p); },
      [p](T v, T) {
        if (p == T(0)) return T(0);
        if (v == T(0)) return p == T(1) ? T(1) : T(0);
        return p * std::pow(v, p - T(1));
      });
}

/// Softmax over the last axis; numerically stabilized by row-max shift.
template <class T>
NodeId softmax(Tape<T>& tp, NodeId x) {
  const Tensor<T>& xv = tp.value(x);
  int c = xv.dim(xv.rank() - 1);
  std::size_t rows = xv.numel() / c;
  Tensor<T> y(xv.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.data.data() + r * c;
    T* yr = y.data.data() + r * c;
    T mx = xr[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, xr[j]);
    T sum = 0;
    for (int j = 0; j < c; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    for (int j = 0; j < c; ++j) yr[j] /= sum;
  }
  NodeId out = static_cast<NodeId>(tp.size());
  return tp.emit(std::move(y), {x}, [x, out, c, rows](Tape<T>& t) {
    const Tensor<T>& gy = t.grad(out);
    const Tensor<T>& yv = t.value(out);
    Tensor<T>& gx = t.grad(x);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* yr = yv.data.data() + r * c;
      const T* gr = gy.data.data() + r * c;
      T dot = 0;
      for (int j = 0; j < c; ++j) dot += gr[j] * yr[j];
      for (int j = 0; j < c; ++j) gx.data[r * c + j] += yr[j] * (gr[j] - dot);
    }
  });
}

// ---------------------------------------------------------------------------
// Structural ops
// ---------------------------------------------------------------------------

/// Concatenates along axis 0; trailing dimensions must agree.
template <class T>
NodeId concat_rows(Tape<T>& tp, const std::vector<NodeId>& xs) {
  check(!xs.empty(), "concat_rows: empty input list");
  Shape tail(tp.value(xs[0]).shape.begin() + 1, tp.value(xs[0]).shape.end());
  int total = 0;
  for (NodeId id : xs) {
    const Tensor<T>& v = tp.value(id);
    Shape t2(v.shape.begin() + 1, v.shape.end());
    check(t2 == tail, "concat_rows: trailing shape mismatch");
    total += v.dim(0);
  }
  Shape oshape = tail;
  oshape.insert(oshape.begin(), total);
  Tensor<T> y(oshape);
  std::size_t off = 0;
  for (NodeId id : xs) {
    const Tensor<T>& v = tp.value(id);
    std::copy(v.data.begin(), v.data.end(), y.data.begin() + off);
    off += v.numel();
  }
  NodeId out = static_cast<NodeId>(tp.size());
  return tp.emit(std::move(y), xs, [xs, out](Tape<T>& t) {
    const Tensor<T>& gy = t.grad(out);
    std::size_t off2 = 0;
    for (NodeId id : xs) {
      std::size_t n = t.value(id).numel();
      if (t.requires_grad(id)) {
        Tensor<T>& gx = t.grad(id);
        for (std::size_t i = 0; i < n; ++i) gx.data[i] += gy.data[off2 + i];
      }
      off2 += n;
    }
  });
}

template <class T>
NodeId slice_rows(Tape<T>& tp, NodeId x, int start, int count) {
  const Tensor<T>& xv = tp.value(x);
  check(start >= 0 && count > 0 && start + count <= xv.dim(0),
        "slice_rows: range out of bounds");
  Shape oshape = xv.shape;
  oshape[0] = count;
  std::size_t rowlen = xv.numel() / xv.dim(0);
  Tensor<T> y(oshape);
  std::copy(xv.data.begin() + start * rowlen,
            xv.data.begin() + (start + count) * rowlen, y.data.begin());
  NodeId out = static_cast<NodeId>(tp.size());
  return tp.emit(std::move(y), {x}, [x, out, start, rowlen](Tape<T>& t) {
    const Tensor<T>& gy = t.grad(out);
    Tensor<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < gy.data.size(); ++i)
      gx.data[start * rowlen + i] += gy.data[i];
  });
}

/// Column j of a (N,C) matrix as a length-N vector.
template <class T>
NodeId select_col(Tape<T>& tp, NodeId x, int j) {
  const Tensor<T>& xv = tp.value(x);
  check(xv.rank() == 2 && j >= 0 && j < xv.dim(1), "select_col: bad column");
  int n = xv.dim(0), c = xv.dim(1);
  Tensor<T> y({n});
  for (int r = 0; r < n; ++r) y.data[r] = xv.data[std::size_t(r) * c + j];
  NodeId out = static_cast<NodeId>(tp.size());
  return tp.emit(std::move(y), {x}, [x, out, j, c, n](Tape<T>& t) {
    const Tensor<T>& gy = t.grad(out);
    Tensor<T>& gx = t.grad(x);
    for (int r = 0; r < n; ++r) gx.data[std::size_t(r) * c + j] += gy.data[r];
  });
}

/// Per-row gather: y[r] = x[r, idx[r]].
template <class T>
NodeId gather_cols(Tape<T>& tp, NodeId x, std::vector<int> idx) {
  const Tensor<T>& xv = tp.value(x);
  check(xv.rank() == 2, "gather_cols expects a 2-D input");
  int n = xv.dim(0), c = xv.dim(1);
  check(static_cast<int>(idx.size()) == n, "gather_cols: index count mismatch");
  for (int j : idx) check(j >= 0 && j < c, "gather_cols: index out of range");
  Tensor<T> y({n});
  for (int r = 0; r < n; ++r) y.data[r] = xv.data[std::size_t(r) * c + idx[r]];
  NodeId out = static_cast<NodeId>(tp.size());
  auto ix = std::make_shared<std::vector<int>>(std::move(idx));
  return tp.emit(std::move(y), {x}, [x, out, ix, c, n](Tape<T>& t) {
    const Tensor<T>& gy = t.grad(out);
    Tensor<T>& gx = t.grad(x);
    for (int r = 0; r < n; ++r) gx.data[std::size_t(r) * c + (*ix)[r]] += gy.data[r];
  });
}

// ---------------------------------------------------------------------------
// Binary elementwise and reductions
// ---------------------------------------------------------------------------

template <class T>
NodeId add(Tape<T>& tp, NodeId a, NodeId b) {
  const Tensor<T>& av = tp.value(a);
  const Tensor<T>& bv = tp.value(b);
  check(av.shape == bv.shape, "add: shape mismatch");
  Tensor<T> y(av.shape);
  for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = av.data[i] + bv.data[i];
  NodeId out = static_cast<NodeId>(tp.size());
  return tp.emit(std::move(y), {a, b}, [a, b, out](Tape<T>& t) {
    const Tensor<T>& gy = t.grad(out);
    if (t.requires_grad(a)) detail::axpy(gy, t.grad(a));
    if (t.requires_grad(b)) detail::axpy(gy, t.grad(b));
  });
}

template <class T>
NodeId sub(Tape<T>& tp, NodeId a, NodeId b) {
  const Tensor<T>& av = tp.value(a);
  const Tensor<T>& bv = tp.value(b);
  check(av.shape == bv.shape, "sub: shape mismatch");
  Tensor<T> y(av.shape);
  for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = av.data[i] - bv.data[i];
  NodeId out = static_cast<NodeId>(tp.size());
  return tp.emit(std::move(y), {a, b}, [a, b, out](Tape<T>& t) {
    const Tensor<T>& gy = t.grad(out);
    if (t.requires_grad(a)) detail::axpy(gy, t.grad(a));
    if (t.requires_grad(b)) {
      Tensor<T>& gb = t.grad(b);
      for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] -= gy.data[i];
    }
  });
}

template <class T>
NodeId mul(Tape<T>& tp, NodeId a, NodeId b) {
  const Tensor<T>& av = tp.value(a);
  const Tensor<T>& bv = tp.value(b);
  check(av.shape == bv.shape, "mul: shape mismatch");
  Tensor<T> y(av.shape);
  for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] = av.data[i] * bv.data[i];
  NodeId out = static_cast<NodeId>(tp.size());
  return tp.emit(std::move(y), {a, b}, [a, b, out](Tape<T>& t) {
    const Tensor<T>& gy = t.grad(out);
    if (t.requires_grad(a)) {
      Tensor<T>& ga = t.grad(a);
      const Tensor<T>& bv2 = t.value(b);
      for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += gy.data[i] * bv2.data[i];
    }
    if (t.requires_grad(b)) {
      Tensor<T>& gb = t.grad(b);
      const Tensor<T>& av2 = t.value(a);
      for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += gy.data[i] * av2.data[i];
    }
  });
}

template <class T>
NodeId sum_all(Tape<T>& tp, NodeId x) {
  const Tensor<T>& xv = tp.value(x);
  T s = 0;
  for (T v : xv.data) s += v;
  NodeId out = static_cast<NodeId>(tp.size());
  return tp.emit(Tensor<T>::scalar(s), {x}, [x, out](Tape<T>& t) {
    T g = t.grad(out).data[0];
    Tensor<T>& gx = t.grad(x);
    for (T& v : gx.data) v += g;
  });
}

template <class T>
NodeId mean_all(Tape<T>& tp, NodeId x) {
  std::size_t n = tp.value(x).numel();
  return scale(tp, sum_all(tp, x), T(1) / T(n));
}

/// Column means of a (N,C) matrix -> length-C vector.
template <class T>
NodeId mean_rows(Tape<T>& tp, NodeId x) {
  const Tensor<T>& xv = tp.value(x);
  check(xv.rank() == 2, "mean_rows expects a 2-D input");
  int n = xv.dim(0), c = xv.dim(1);
  Tensor<T> y({c}, T(0));
  for (int r = 0; r < n; ++r)
    for (int j = 0; j < c; ++j) y.data[j] += xv.data[std::size_t(r) * c + j];
  for (int j = 0; j < c; ++j) y.data[j] /= T(n);
  NodeId out = static_cast<NodeId>(tp.size());
  return tp.emit(std::move(y), {x}, [x, out, n, c](Tape<T>& t) {
    const Tensor<T>& gy = t.grad(out);
    Tensor<T>& gx = t.grad(x);
    for (int r = 0; r < n; ++r)
      for (int j = 0; j < c; ++j) gx.data[std::size_t(r) * c + j] += gy.data[j] / T(n);
  });
}

/// Sum of squares -> scalar.
template <class T>
NodeId sq_sum(Tape<T>& tp, NodeId x) {
  const Tensor<T>& xv = tp.value(x);
  T s = 0;
  for (T v : xv.data) s += v * v;
  NodeId out = static_cast<NodeId>(tp.size());
  return tp.emit(Tensor<T>::scalar(s), {x}, [x, out](Tape<T>& t) {
    T g = t.grad(out).data[0];
    const Tensor<T>& xv2 = t.value(x);
    Tensor<T>& gx = t.grad(x);
    for (std::size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += g * T(2) * xv2.data[i];
  });
}

template <class T>
NodeId neg_mean(Tape<T>& tp, NodeId x) {
  return scale(tp, mean_all(tp, x), T(-1));
}

}  // namespace bssgan
