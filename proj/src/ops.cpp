#include "bnlab/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "parallel.hpp"

namespace bnlab::ops {

namespace {

using detail::parallel_for;
using detail::parallel_ranges;

bool wants_grad(const Tensor& t) { return t.defined() && t.requires_grad(); }

// Lane accumulator with a fixed combine tree: the summation order is a pure
// function of the element count, so reductions stay bit-reproducible while
// the lane loop vectorizes.
template <typename T>
struct LaneAcc {
  static constexpr int kLanes = 16;
  T lanes[kLanes] = {};

  void add_dot(const T* a, const T* b, int n) {
    int i = 0;
    for (; i + kLanes <= n; i += kLanes)
      for (int l = 0; l < kLanes; ++l) lanes[l] += a[i + l] * b[i + l];
    for (; i < n; ++i) lanes[i % kLanes] += a[i] * b[i];
  }

  T total() const {
    T pair[8];
    for (int l = 0; l < 8; ++l) pair[l] = lanes[2 * l] + lanes[2 * l + 1];
    return ((pair[0] + pair[1]) + (pair[2] + pair[3])) +
           ((pair[4] + pair[5]) + (pair[6] + pair[7]));
  }
};

template <typename T>
void axpy(T* dst, const T* src, T coeff, int n) {
  for (int i = 0; i < n; ++i) dst[i] += coeff * src[i];
}

// Marks `out` as a recorded intermediate so downstream ops keep the chain.
void mark_recorded(Tape* tape, Tensor& out) {
  out.set_requires_grad(true);
  tape->note_produced(out);
}

void check_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dtype() != b.dtype()) throw ShapeError(std::string(op) + ": mixed dtypes");
}

// Valid output-column range for a given kernel column offset, so inner loops
// run branch-free: iw = ow*stride - pad + kw must land in [0, W).
inline void ow_range(int W, int Wo, int stride, int pad, int kw, int& lo, int& hi) {
  int lo_num = pad - kw;
  lo = lo_num <= 0 ? 0 : (lo_num + stride - 1) / stride;
  int hi_num = W - 1 + pad - kw;
  hi = hi_num < 0 ? -1 : hi_num / stride;
  if (hi > Wo - 1) hi = Wo - 1;
}

struct ConvDims {
  int B, Cin, H, W, Cout, kH, kW, stride, pad, Ho, Wo;
};

// The convolutions run as patch-matrix products: rows of length Ho*Wo keep
// the inner loops long enough to vectorize, and every reduction order is a
// fixed function of the shape, so results are bit-reproducible at any
// thread count. A 1x1 stride-1 unpadded conv uses the input directly.

inline bool identity_patch(const ConvDims& d) {
  return d.kH == 1 && d.kW == 1 && d.stride == 1 && d.pad == 0;
}

// col[(ci*kH+kh)*kW+kw][oh*Wo+ow] = x[ci][oh*stride-pad+kh][ow*stride-pad+kw]
// with zeros where the window leaves the image.
template <typename T>
void im2col(const T* xb, const ConvDims& d, T* col) {
  const int N = d.Ho * d.Wo;
  for (int ci = 0; ci < d.Cin; ++ci)
    for (int kh = 0; kh < d.kH; ++kh)
      for (int kw = 0; kw < d.kW; ++kw) {
        T* row = col + ((static_cast<size_t>(ci) * d.kH + kh) * d.kW + kw) * N;
        int lo, hi;
        ow_range(d.W, d.Wo, d.stride, d.pad, kw, lo, hi);
        for (int oh = 0; oh < d.Ho; ++oh) {
          T* dst = row + static_cast<size_t>(oh) * d.Wo;
          const int ih = oh * d.stride - d.pad + kh;
          if (ih < 0 || ih >= d.H || lo > hi) {
            std::fill(dst, dst + d.Wo, T(0));
            continue;
          }
          std::fill(dst, dst + lo, T(0));
          const T* src = xb + (static_cast<size_t>(ci) * d.H + ih) * d.W +
                         (lo * d.stride - d.pad + kw);
          if (d.stride == 1) {
            std::copy(src, src + (hi - lo + 1), dst + lo);
          } else {
            for (int i = 0; i <= hi - lo; ++i)
              dst[lo + i] = src[static_cast<size_t>(i) * d.stride];
          }
          std::fill(dst + hi + 1, dst + d.Wo, T(0));
        }
      }
}

// Transpose of im2col as an accumulation: dxb += patches scattered back.
template <typename T>
void col2im_add(const T* col, const ConvDims& d, T* dxb) {
  const int N = d.Ho * d.Wo;
  for (int ci = 0; ci < d.Cin; ++ci)
    for (int kh = 0; kh < d.kH; ++kh)
      for (int kw = 0; kw < d.kW; ++kw) {
        const T* row = col + ((static_cast<size_t>(ci) * d.kH + kh) * d.kW + kw) * N;
        int lo, hi;
        ow_range(d.W, d.Wo, d.stride, d.pad, kw, lo, hi);
        if (lo > hi) continue;
        for (int oh = 0; oh < d.Ho; ++oh) {
          const int ih = oh * d.stride - d.pad + kh;
          if (ih < 0 || ih >= d.H) continue;
          const T* src = row + static_cast<size_t>(oh) * d.Wo + lo;
          T* dst = dxb + (static_cast<size_t>(ci) * d.H + ih) * d.W +
                   (lo * d.stride - d.pad + kw);
          if (d.stride == 1) {
            for (int i = 0; i <= hi - lo; ++i) dst[i] += src[i];
          } else {
            for (int i = 0; i <= hi - lo; ++i)
              dst[static_cast<size_t>(i) * d.stride] += src[i];
          }
        }
      }
}

constexpr int kCoBlock = 8;  // output rows sharing one patch-row pass

// y[b,co] = sum_r w[co,r] * patches[r]; r ascending per output row. Blocks
// of output channels share each patch row while it is hot in cache.
template <typename T>
void conv2d_forward(const T* x, const T* w, T* y, const ConvDims& d) {
  const int K = d.Cin * d.kH * d.kW;
  const int N = d.Ho * d.Wo;
  const bool identity = identity_patch(d);
  parallel_ranges(d.B, 8, [&](long b_lo, long b_hi) {
    std::vector<T> col(identity ? 0 : static_cast<size_t>(K) * N);
    for (long b = b_lo; b < b_hi; ++b) {
      const T* xb = x + static_cast<size_t>(b) * d.Cin * d.H * d.W;
      const T* patches = identity ? xb : col.data();
      if (!identity) im2col(xb, d, col.data());
      T* yb = y + static_cast<size_t>(b) * d.Cout * N;
      for (int co0 = 0; co0 < d.Cout; co0 += kCoBlock) {
        const int nb = std::min(kCoBlock, d.Cout - co0);
        for (int r = 0; r < K; ++r) {
          const T* crow = patches + static_cast<size_t>(r) * N;
          for (int j = 0; j < nb; ++j)
            axpy(yb + static_cast<size_t>(co0 + j) * N, crow,
                 w[static_cast<size_t>(co0 + j) * K + r], N);
        }
      }
    }
  });
}

// dpatches[r] = sum_co w[co,r] * dy[b,co] (co ascending), scattered back
// through col2im; images are independent.
template <typename T>
void conv2d_backward_input(const T* dy, const T* w, T* dx, const ConvDims& d) {
  const int K = d.Cin * d.kH * d.kW;
  const int N = d.Ho * d.Wo;
  const bool identity = identity_patch(d);
  parallel_ranges(d.B, 8, [&](long b_lo, long b_hi) {
    std::vector<T> dcol(identity ? 0 : static_cast<size_t>(K) * N);
    for (long b = b_lo; b < b_hi; ++b) {
      const T* dyb = dy + static_cast<size_t>(b) * d.Cout * N;
      T* dxb = dx + static_cast<size_t>(b) * d.Cin * d.H * d.W;
      T* target = identity ? dxb : dcol.data();
      if (!identity) std::fill(dcol.begin(), dcol.end(), T(0));
      for (int r0 = 0; r0 < K; r0 += kCoBlock) {
        const int nb = std::min(kCoBlock, K - r0);
        for (int co = 0; co < d.Cout; ++co) {
          const T* dyrow = dyb + static_cast<size_t>(co) * N;
          for (int j = 0; j < nb; ++j)
            axpy(target + static_cast<size_t>(r0 + j) * N, dyrow,
                 w[static_cast<size_t>(co) * K + r0 + j], N);
        }
      }
      if (!identity) col2im_add(dcol.data(), d, dxb);
    }
  });
}

// dw[co,r] += dot(dy[b,co], patches[r]) accumulated in batch order. Workers
// own disjoint co ranges; the per-worker im2col recomputation is cheap next
// to the dot products it feeds.
template <typename T>
void conv2d_backward_kernel(const T* dy, const T* x, T* dw, const ConvDims& d) {
  const int K = d.Cin * d.kH * d.kW;
  const int N = d.Ho * d.Wo;
  const bool identity = identity_patch(d);
  parallel_ranges(d.Cout, 4, [&](long co_lo, long co_hi) {
    std::vector<T> col(identity ? 0 : static_cast<size_t>(K) * N);
    for (int b = 0; b < d.B; ++b) {
      const T* xb = x + static_cast<size_t>(b) * d.Cin * d.H * d.W;
      const T* patches = identity ? xb : col.data();
      if (!identity) im2col(xb, d, col.data());
      const T* dyb = dy + static_cast<size_t>(b) * d.Cout * N;
      for (long co0 = co_lo; co0 < co_hi; co0 += kCoBlock) {
        const int nb = static_cast<int>(std::min<long>(kCoBlock, co_hi - co0));
        for (int r = 0; r < K; ++r) {
          const T* crow = patches + static_cast<size_t>(r) * N;
          for (int j = 0; j < nb; ++j) {
            LaneAcc<T> acc;
            acc.add_dot(dyb + static_cast<size_t>(co0 + j) * N, crow, N);
            dw[static_cast<size_t>(co0 + j) * K + r] += acc.total();
          }
        }
      }
    }
  });
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding, Tape* tape) {
  check_same_dtype(input, kernel, "conv2d");
  if (input.rank() != 4 || kernel.rank() != 4)
    throw ShapeError("conv2d: expected 4-D input and kernel, got " + shape_str(input.shape()) +
                     " and " + shape_str(kernel.shape()));
  ConvDims d;
  d.B = input.dim(0);
  d.Cin = input.dim(1);
  d.H = input.dim(2);
  d.W = input.dim(3);
  d.Cout = kernel.dim(0);
  d.kH = kernel.dim(2);
  d.kW = kernel.dim(3);
  d.stride = stride;
  d.pad = padding;
  if (kernel.dim(1) != d.Cin)
    throw ShapeError("conv2d: input has " + std::to_string(d.Cin) + " channels but kernel " +
                     shape_str(kernel.shape()) + " expects " + std::to_string(kernel.dim(1)));
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: bad stride/padding");
  d.Ho = (d.H + 2 * padding - d.kH) / stride + 1;
  d.Wo = (d.W + 2 * padding - d.kW) / stride + 1;
  if (d.H + 2 * padding < d.kH || d.W + 2 * padding < d.kW)
    throw ShapeError("conv2d: kernel larger than padded input");

  Tensor out = Tensor::zeros({d.B, d.Cout, d.Ho, d.Wo}, input.dtype());
  if (input.dtype() == Dtype::f32)
    conv2d_forward(input.data<float>(), kernel.data<float>(), out.data<float>(), d);
  else
    conv2d_forward(input.data<double>(), kernel.data<double>(), out.data<double>(), d);

  if (tape && (wants_grad(input) || wants_grad(kernel))) {
    mark_recorded(tape, out);
    Tensor x = input, w = kernel, y = out;
    tape->record([x, w, y, d]() mutable {
      if (y.dtype() == Dtype::f32) {
        const float* dy = y.grad<float>();
        if (x.requires_grad()) conv2d_backward_input(dy, w.data<float>(), x.grad<float>(), d);
        if (w.requires_grad()) conv2d_backward_kernel(dy, x.data<float>(), w.grad<float>(), d);
      } else {
        const double* dy = y.grad<double>();
        if (x.requires_grad()) conv2d_backward_input(dy, w.data<double>(), x.grad<double>(), d);
        if (w.requires_grad()) conv2d_backward_kernel(dy, x.data<double>(), w.grad<double>(), d);
      }
    });
  }
  return out;
}

namespace {

template <typename T>
void relu_forward(const T* x, T* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward(const T* dy, const T* x, T* dx, size_t n) {
  for (size_t i = 0; i < n; ++i)
    if (x[i] > T(0)) dx[i] += dy[i];
}

}  // namespace

Tensor relu(const Tensor& input, Tape* tape) {
  Tensor out = Tensor::zeros(input.shape(), input.dtype());
  const size_t n = input.numel();
  if (input.dtype() == Dtype::f32)
    relu_forward(input.data<float>(), out.data<float>(), n);
  else
    relu_forward(input.data<double>(), out.data<double>(), n);

  if (tape && wants_grad(input)) {
    mark_recorded(tape, out);
    Tensor x = input, y = out;
    tape->record([x, y, n]() mutable {
      if (y.dtype() == Dtype::f32)
        relu_backward(y.grad<float>(), x.data<float>(), x.grad<float>(), n);
      else
        relu_backward(y.grad<double>(), x.data<double>(), x.grad<double>(), n);
    });
  }
  return out;
}

namespace {

template <typename T>
void linear_forward(const T* x, const T* w, const T* b, T* y, int B, int F, int K) {
  parallel_for(B, 8, [&](long i) {
    const T* xrow = x + static_cast<size_t>(i) * F;
    for (int k = 0; k < K; ++k) {
      LaneAcc<T> acc;
      acc.add_dot(xrow, w + static_cast<size_t>(k) * F, F);
      y[static_cast<size_t>(i) * K + k] = b[k] + acc.total();
    }
  });
}

template <typename T>
void linear_backward(const T* dy, const T* x, const T* w, T* dx, T* dw, T* db, int B, int F,
                     int K) {
  if (dx)
    parallel_for(B, 8, [&](long i) {
      T* dxrow = dx + static_cast<size_t>(i) * F;
      for (int k = 0; k < K; ++k)
        axpy(dxrow, w + static_cast<size_t>(k) * F, dy[static_cast<size_t>(i) * K + k], F);
    });
  if (dw)
    parallel_for(K, 8, [&](long k) {
      T* dwrow = dw + static_cast<size_t>(k) * F;
      for (int i = 0; i < B; ++i)
        axpy(dwrow, x + static_cast<size_t>(i) * F, dy[static_cast<size_t>(i) * K + k], F);
    });
  if (db)
    for (int k = 0; k < K; ++k) {
      T acc = 0;
      for (int i = 0; i < B; ++i) acc += dy[static_cast<size_t>(i) * K + k];
      db[k] += acc;
    }
}

}  // namespace

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias, Tape* tape) {
  check_same_dtype(input, weight, "linear");
  check_same_dtype(input, bias, "linear");
  if (input.rank() != 2 || weight.rank() != 2 || bias.rank() != 1)
    throw ShapeError("linear: expected [B,F] x [K,F] + [K]");
  const int B = input.dim(0), F = input.dim(1), K = weight.dim(0);
  if (weight.dim(1) != F || bias.dim(0) != K)
    throw ShapeError("linear: dimension mismatch between input " + shape_str(input.shape()) +
                     ", weight " + shape_str(weight.shape()) + ", bias " +
                     shape_str(bias.shape()));

  Tensor out = Tensor::zeros({B, K}, input.dtype());
  if (input.dtype() == Dtype::f32)
    linear_forward(input.data<float>(), weight.data<float>(), bias.data<float>(),
                   out.data<float>(), B, F, K);
  else
    linear_forward(input.data<double>(), weight.data<double>(), bias.data<double>(),
                   out.data<double>(), B, F, K);

  if (tape && (wants_grad(input) || wants_grad(weight) || wants_grad(bias))) {
    mark_recorded(tape, out);
    Tensor x = input, w = weight, b = bias, y = out;
    tape->record([x, w, b, y, B, F, K]() mutable {
      if (y.dtype() == Dtype::f32)
        linear_backward(y.grad<float>(), x.data<float>(), w.data<float>(),
                        x.requires_grad() ? x.grad<float>() : nullptr,
                        w.requires_grad() ? w.grad<float>() : nullptr,
                        b.requires_grad() ? b.grad<float>() : nullptr, B, F, K);
      else
        linear_backward(y.grad<double>(), x.data<double>(), w.data<double>(),
                        x.requires_grad() ? x.grad<double>() : nullptr,
                        w.requires_grad() ? w.grad<double>() : nullptr,
                        b.requires_grad() ? b.grad<double>() : nullptr, B, F, K);
    });
  }
  return out;
}

namespace {

template <typename T>
void avgpool_forward(const T* x, T* y, int B, int C, int HW) {
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const T* base = x + (static_cast<size_t>(b) * C + c) * HW;
      T acc = 0;
      for (int i = 0; i < HW; ++i) acc += base[i];
      y[static_cast<size_t>(b) * C + c] = acc / static_cast<T>(HW);
    }
}

template <typename T>
void avgpool_backward(const T* dy, T* dx, int B, int C, int HW) {
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const T g = dy[static_cast<size_t>(b) * C + c] / static_cast<T>(HW);
      T* base = dx + (static_cast<size_t>(b) * C + c) * HW;
      for (int i = 0; i < HW; ++i) base[i] += g;
    }
}

}  // namespace

Tensor avgpool_global(const Tensor& input, Tape* tape) {
  if (input.rank() != 4) throw ShapeError("avgpool_global: expected [B,C,H,W]");
  const int B = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);
  if (HW < 1) throw ShapeError("avgpool_global: empty spatial extent");

  Tensor out = Tensor::zeros({B, C}, input.dtype());
  if (input.dtype() == Dtype::f32)
    avgpool_forward(input.data<float>(), out.data<float>(), B, C, HW);
  else
    avgpool_forward(input.data<double>(), out.data<double>(), B, C, HW);

  if (tape && wants_grad(input)) {
    mark_recorded(tape, out);
    Tensor x = input, y = out;
    tape->record([x, y, B, C, HW]() mutable {
      if (y.dtype() == Dtype::f32)
        avgpool_backward(y.grad<float>(), x.grad<float>(), B, C, HW);
      else
        avgpool_backward(y.grad<double>(), x.grad<double>(), B, C, HW);
    });
  }
  return out;
}

namespace {

template <typename T>
void maxpool_forward(const T* x, T* y, int32_t* argmax, int B, int C, int H, int W, int win,
                     int stride, int pad, int Ho, int Wo) {
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const T* plane = x + (static_cast<size_t>(b) * C + c) * H * W;
      for (int oh = 0; oh < Ho; ++oh)
        for (int ow = 0; ow < Wo; ++ow) {
          T best = -std::numeric_limits<T>::infinity();
          int32_t best_idx = -1;
          for (int kh = 0; kh < win; ++kh) {
            const int ih = oh * stride - pad + kh;
            if (ih < 0 || ih >= H) continue;
            for (int kw = 0; kw < win; ++kw) {
              const int iw = ow * stride - pad + kw;
              if (iw < 0 || iw >= W) continue;
              const T v = plane[static_cast<size_t>(ih) * W + iw];
              if (v > best) {  // strict: first occurrence wins on ties
                best = v;
                best_idx = static_cast<int32_t>(ih * W + iw);
              }
            }
          }
          const size_t oidx =
              ((static_cast<size_t>(b) * C + c) * Ho + oh) * Wo + ow;
          y[oidx] = best;
          argmax[oidx] = best_idx;
        }
    }
}

}  // namespace

Tensor maxpool2d(const Tensor& input, int window, int stride, int padding, Tape* tape) {
  if (input.rank() != 4) throw ShapeError("maxpool2d: expected [B,C,H,W]");
  const int B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (window < 1 || stride < 1 || padding < 0 || padding >= window)
    throw ShapeError("maxpool2d: invalid window/stride/padding (" + std::to_string(window) +
                     "/" + std::to_string(stride) + "/" + std::to_string(padding) +
                     "); padding must stay below the window so every window sees the input");
  if (H + 2 * padding < window || W + 2 * padding < window)
    throw ShapeError("maxpool2d: window " + std::to_string(window) +
                     " larger than padded input " + shape_str(input.shape()));
  const int Ho = (H + 2 * padding - window) / stride + 1;
  const int Wo = (W + 2 * padding - window) / stride + 1;

  Tensor out = Tensor::zeros({B, C, Ho, Wo}, input.dtype());
  auto argmax = std::make_shared<std::vector<int32_t>>(out.numel());
  if (input.dtype() == Dtype::f32)
    maxpool_forward(input.data<float>(), out.data<float>(), argmax->data(), B, C, H, W, window,
                    stride, padding, Ho, Wo);
  else
    maxpool_forward(input.data<double>(), out.data<double>(), argmax->data(), B, C, H, W, window,
                    stride, padding, Ho, Wo);

  if (tape && wants_grad(input)) {
    mark_recorded(tape, out);
    Tensor x = input, y = out;
    const int HW = H * W;
    tape->record([x, y, argmax, B, C, HW, Ho, Wo]() mutable {
      const size_t planes = static_cast<size_t>(B) * C;
      if (y.dtype() == Dtype::f32) {
        const float* dy = y.grad<float>();
        float* dx = x.grad<float>();
        for (size_t p = 0; p < planes; ++p)
          for (size_t o = 0; o < static_cast<size_t>(Ho) * Wo; ++o) {
            const size_t oidx = p * Ho * Wo + o;
            dx[p * HW + (*argmax)[oidx]] += dy[oidx];
          }
      } else {
        const double* dy = y.grad<double>();
        double* dx = x.grad<double>();
        for (size_t p = 0; p < planes; ++p)
          for (size_t o = 0; o < static_cast<size_t>(Ho) * Wo; ++o) {
            const size_t oidx = p * Ho * Wo + o;
            dx[p * HW + (*argmax)[oidx]] += dy[oidx];
          }
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
  check_same_dtype(a, b, "add");
  if (a.shape() != b.shape())
    throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  Tensor out = Tensor::zeros(a.shape(), a.dtype());
  const size_t n = a.numel();
  if (a.dtype() == Dtype::f32) {
    const float* pa = a.data<float>();
    const float* pb = b.data<float>();
    float* py = out.data<float>();
    for (size_t i = 0; i < n; ++i) py[i] = pa[i] + pb[i];
  } else {
    const double* pa = a.data<double>();
    const double* pb = b.data<double>();
    double* py = out.data<double>();
    for (size_t i = 0; i < n; ++i) py[i] = pa[i] + pb[i];
  }

  if (tape && (wants_grad(a) || wants_grad(b))) {
    mark_recorded(tape, out);
    Tensor ta = a, tb = b, y = out;
    tape->record([ta, tb, y, n]() mutable {
      if (y.dtype() == Dtype::f32) {
        const float* dy = y.grad<float>();
        if (ta.requires_grad()) {
          float* da = ta.grad<float>();
          for (size_t i = 0; i < n; ++i) da[i] += dy[i];
        }
        if (tb.requires_grad()) {
          float* db = tb.grad<float>();
          for (size_t i = 0; i < n; ++i) db[i] += dy[i];
        }
      } else {
        const double* dy = y.grad<double>();
        if (ta.requires_grad()) {
          double* da = ta.grad<double>();
          for (size_t i = 0; i < n; ++i) da[i] += dy[i];
        }
        if (tb.requires_grad()) {
          double* db = tb.grad<double>();
          for (size_t i = 0; i < n; ++i) db[i] += dy[i];
        }
      }
    });
  }
  return out;
}

Tensor channel_bias(const Tensor& input, const Tensor& bias, Tape* tape) {
  check_same_dtype(input, bias, "channel_bias");
  if (input.rank() != 4 || bias.rank() != 1 || bias.dim(0) != input.dim(1))
    throw ShapeError("channel_bias: bias " + shape_str(bias.shape()) +
                     " does not match input channels of " + shape_str(input.shape()));
  const int B = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);

  Tensor out = Tensor::zeros(input.shape(), input.dtype());
  if (input.dtype() == Dtype::f32) {
    const float* px = input.data<float>();
    const float* pb = bias.data<float>();
    float* py = out.data<float>();
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        const size_t base = (static_cast<size_t>(b) * C + c) * HW;
        for (int i = 0; i < HW; ++i) py[base + i] = px[base + i] + pb[c];
      }
  } else {
    const double* px = input.data<double>();
    const double* pb = bias.data<double>();
    double* py = out.data<double>();
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        const size_t base = (static_cast<size_t>(b) * C + c) * HW;
        for (int i = 0; i < HW; ++i) py[base + i] = px[base + i] + pb[c];
      }
  }

  if (tape && (wants_grad(input) || wants_grad(bias))) {
    mark_recorded(tape, out);
    Tensor x = input, bv = bias, y = out;
    tape->record([x, bv, y, B, C, HW]() mutable {
      if (y.dtype() == Dtype::f32) {
        const float* dy = y.grad<float>();
        if (x.requires_grad()) {
          float* dx = x.grad<float>();
          for (size_t i = 0; i < static_cast<size_t>(B) * C * HW; ++i) dx[i] += dy[i];
        }
        if (bv.requires_grad()) {
          float* db = bv.grad<float>();
          for (int c = 0; c < C; ++c) {
            float acc = 0;
            for (int b = 0; b < B; ++b) {
              const size_t base = (static_cast<size_t>(b) * C + c) * HW;
              for (int i = 0; i < HW; ++i) acc += dy[base + i];
            }
            db[c] += acc;
          }
        }
      } else {
        const double* dy = y.grad<double>();
        if (x.requires_grad()) {
          double* dx = x.grad<double>();
          for (size_t i = 0; i < static_cast<size_t>(B) * C * HW; ++i) dx[i] += dy[i];
        }
        if (bv.requires_grad()) {
          double* db = bv.grad<double>();
          for (int c = 0; c < C; ++c) {
            double acc = 0;
            for (int b = 0; b < B; ++b) {
              const size_t base = (static_cast<size_t>(b) * C + c) * HW;
              for (int i = 0; i < HW; ++i) acc += dy[base + i];
            }
            db[c] += acc;
          }
        }
      }
    });
  }
  return out;
}

namespace {

template <typename T>
double sce_forward(const T* logits, const std::vector<int>& labels, T* probs, int B, int K) {
  double loss = 0.0;
  for (int b = 0; b < B; ++b) {
    const T* row = logits + static_cast<size_t>(b) * K;
    T* prow = probs + static_cast<size_t>(b) * K;
    T mx = row[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    T denom = 0;
    for (int k = 0; k < K; ++k) {
      prow[k] = std::exp(row[k] - mx);
      denom += prow[k];
    }
    for (int k = 0; k < K; ++k) prow[k] /= denom;
    loss -= std::log(static_cast<double>(prow[labels[static_cast<size_t>(b)]]));
  }
  return loss / B;
}

}  // namespace

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels, Tape* tape) {
  if (logits.rank() != 2) throw ShapeError("softmax_cross_entropy: expected [B,K] logits");
  const int B = logits.dim(0), K = logits.dim(1);
  if (static_cast<int>(labels.size()) != B)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(B) + " rows");
  for (int lb : labels)
    if (lb < 0 || lb >= K)
      throw UsageError("softmax_cross_entropy: label " + std::to_string(lb) +
                       " outside [0," + std::to_string(K) + ")");

  Tensor probs = Tensor::zeros({B, K}, logits.dtype());
  double loss_value;
  if (logits.dtype() == Dtype::f32)
    loss_value = sce_forward(logits.data<float>(), labels, probs.data<float>(), B, K);
  else
    loss_value = sce_forward(logits.data<double>(), labels, probs.data<double>(), B, K);

  Tensor out = Tensor::full({1}, loss_value, logits.dtype());

  if (tape && wants_grad(logits)) {
    mark_recorded(tape, out);
    Tensor x = logits, y = out;
    auto labels_copy = std::make_shared<std::vector<int>>(labels);
    tape->record([x, y, probs, labels_copy, B, K]() mutable {
      if (y.dtype() == Dtype::f32) {
        const float g = y.grad<float>()[0] / static_cast<float>(B);
        float* dx = x.grad<float>();
        const float* p = probs.data<float>();
        for (int b = 0; b < B; ++b)
          for (int k = 0; k < K; ++k) {
            const size_t i = static_cast<size_t>(b) * K + k;
            dx[i] += g * (p[i] - (k == (*labels_copy)[static_cast<size_t>(b)] ? 1.0f : 0.0f));
          }
      } else {
        const double g = y.grad<double>()[0] / static_cast<double>(B);
        double* dx = x.grad<double>();
        const double* p = probs.data<double>();
        for (int b = 0; b < B; ++b)
          for (int k = 0; k < K; ++k) {
            const size_t i = static_cast<size_t>(b) * K + k;
            dx[i] += g * (p[i] - (k == (*labels_copy)[static_cast<size_t>(b)] ? 1.0 : 0.0));
          }
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b, Tape* tape) {
  check_same_dtype(a, b, "mul");
  if (a.shape() != b.shape())
    throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  Tensor out = Tensor::zeros(a.shape(), a.dtype());
  const size_t n = a.numel();
  for (size_t i = 0; i < n; ++i) out.set_value(i, a.value_at(i) * b.value_at(i));

  if (tape && (wants_grad(a) || wants_grad(b))) {
    mark_recorded(tape, out);
    Tensor ta = a, tb = b, y = out;
    tape->record([ta, tb, y, n]() mutable {
      for (size_t i = 0; i < n; ++i) {
        const double dy = y.grad_at(i);
        if (ta.requires_grad()) {
          ta.ensure_grad();
          if (ta.dtype() == Dtype::f32)
            ta.grad<float>()[i] += static_cast<float>(dy * tb.value_at(i));
          else
            ta.grad<double>()[i] += dy * tb.value_at(i);
        }
        if (tb.requires_grad()) {
          tb.ensure_grad();
          if (tb.dtype() == Dtype::f32)
            tb.grad<float>()[i] += static_cast<float>(dy * ta.value_at(i));
          else
            tb.grad<double>()[i] += dy * ta.value_at(i);
        }
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& input, Tape* tape) {
  double acc = 0.0;
  const size_t n = input.numel();
  for (size_t i = 0; i < n; ++i) acc += input.value_at(i);
  Tensor out = Tensor::full({1}, acc, input.dtype());

  if (tape && wants_grad(input)) {
    mark_recorded(tape, out);
    Tensor x = input, y = out;
    tape->record([x, y, n]() mutable {
      const double dy = y.grad_at(0);
      x.ensure_grad();
      if (x.dtype() == Dtype::f32) {
        float* dx = x.grad<float>();
        for (size_t i = 0; i < n; ++i) dx[i] += static_cast<float>(dy);
      } else {
        double* dx = x.grad<double>();
        for (size_t i = 0; i < n; ++i) dx[i] += dy;
      }
    });
  }
  return out;
}

}  // namespace bnlab::ops
