#include "bnlab/batchnorm.hpp"

#include <cmath>

#include "parallel.hpp"

namespace bnlab {

const char* bn_init_name(BnInit s) {
  switch (s) {
    case BnInit::uniform01_zero: return "uniform01_zero";
    case BnInit::one_zero: return "one_zero";
    case BnInit::uniform_sym_zero: return "uniform_sym_zero";
    case BnInit::one_one: return "one_one";
  }
  return "?";
}

BnInit bn_init_parse(const std::string& name) {
  if (name == "uniform01_zero") return BnInit::uniform01_zero;
  if (name == "one_zero") return BnInit::one_zero;
  if (name == "uniform_sym_zero") return BnInit::uniform_sym_zero;
  if (name == "one_one") return BnInit::one_one;
  throw ConfigError("unknown batchnorm init scheme: " + name);
}

BatchNormState bn_init(int channels, BnInit scheme, Prng& rng, Dtype dt) {
  if (channels < 1) throw ConfigError("bn_init: channel count must be >= 1");
  BatchNormState st;
  st.gamma = Tensor::zeros({channels}, dt);
  st.beta = Tensor::zeros({channels}, dt);
  st.running_mean = Tensor::zeros({channels}, dt);
  st.running_var = Tensor::full({channels}, 1.0, dt);
  switch (scheme) {
    case BnInit::uniform01_zero:
      for (int c = 0; c < channels; ++c) st.gamma.set_value(static_cast<size_t>(c), rng.next_double());
      break;
    case BnInit::one_zero:
      for (int c = 0; c < channels; ++c) st.gamma.set_value(static_cast<size_t>(c), 1.0);
      break;
    case BnInit::uniform_sym_zero:
      for (int c = 0; c < channels; ++c)
        st.gamma.set_value(static_cast<size_t>(c), rng.next_uniform(-1.0, 1.0));
      break;
    case BnInit::one_one:
      for (int c = 0; c < channels; ++c) {
        st.gamma.set_value(static_cast<size_t>(c), 1.0);
        st.beta.set_value(static_cast<size_t>(c), 1.0);
      }
      break;
  }
  st.gamma.set_requires_grad(true);
  st.beta.set_requires_grad(true);
  return st;
}

namespace {

// Eight-lane sums with a fixed combine tree (bit-reproducible, vectorizable).
template <typename T>
struct Lanes {
  T v[8] = {};
  void add(const T* a, int n) {
    int i = 0;
    for (; i + 8 <= n; i += 8)
      for (int l = 0; l < 8; ++l) v[l] += a[i + l];
    for (; i < n; ++i) v[i & 7] += a[i];
  }
  void add_sq_diff(const T* a, T mean, int n) {
    int i = 0;
    for (; i + 8 <= n; i += 8)
      for (int l = 0; l < 8; ++l) v[l] += (a[i + l] - mean) * (a[i + l] - mean);
    for (; i < n; ++i) v[i & 7] += (a[i] - mean) * (a[i] - mean);
  }
  void add_prod(const T* a, const T* b, int n) {
    int i = 0;
    for (; i + 8 <= n; i += 8)
      for (int l = 0; l < 8; ++l) v[l] += a[i + l] * b[i + l];
    for (; i < n; ++i) v[i & 7] += a[i] * b[i];
  }
  T total() const {
    return ((v[0] + v[1]) + (v[2] + v[3])) + ((v[4] + v[5]) + (v[6] + v[7]));
  }
};

template <typename T>
void bn_train_kernel(const T* x, const T* gamma, const T* beta, T* y, T* xhat, T* inv_std,
                     T* batch_mean, T* batch_var, int B, int C, int HW, double eps) {
  const size_t n = static_cast<size_t>(B) * HW;
  detail::parallel_for(C, 2, [&](long c) {
    // Two passes: mean, then centered second moment (biased, divisor n).
    Lanes<T> sum;
    for (int b = 0; b < B; ++b)
      sum.add(x + (static_cast<size_t>(b) * C + c) * HW, HW);
    const T mean = sum.total() / static_cast<T>(n);
    Lanes<T> var_sum;
    for (int b = 0; b < B; ++b)
      var_sum.add_sq_diff(x + (static_cast<size_t>(b) * C + c) * HW, mean, HW);
    const T var = var_sum.total() / static_cast<T>(n);
    const T istd = static_cast<T>(1.0 / std::sqrt(static_cast<double>(var) + eps));
    batch_mean[c] = mean;
    batch_var[c] = var;
    inv_std[c] = istd;
    const T g = gamma[c], bt = beta[c];
    for (int b = 0; b < B; ++b) {
      const size_t base = (static_cast<size_t>(b) * C + c) * HW;
      for (int i = 0; i < HW; ++i) {
        const T h = (x[base + i] - mean) * istd;
        xhat[base + i] = h;
        y[base + i] = g * h + bt;
      }
    }
  });
}

template <typename T>
void bn_train_backward(const T* dy, const T* xhat, const T* inv_std, const T* gamma, T* dx,
                       T* dgamma, T* dbeta, int B, int C, int HW) {
  const T n = static_cast<T>(static_cast<size_t>(B) * HW);
  detail::parallel_for(C, 2, [&](long c) {
    Lanes<T> s_dy, s_dy_xhat;
    for (int b = 0; b < B; ++b) {
      const size_t base = (static_cast<size_t>(b) * C + c) * HW;
      s_dy.add(dy + base, HW);
      s_dy_xhat.add_prod(dy + base, xhat + base, HW);
    }
    const T sum_dy = s_dy.total();
    const T sum_dy_xhat = s_dy_xhat.total();
    if (dgamma) dgamma[c] += sum_dy_xhat;
    if (dbeta) dbeta[c] += sum_dy;
    if (dx) {
      const T k = gamma[c] * inv_std[c];
      const T mean_dy = sum_dy / n;
      const T mean_dy_xhat = sum_dy_xhat / n;
      for (int b = 0; b < B; ++b) {
        const size_t base = (static_cast<size_t>(b) * C + c) * HW;
        for (int i = 0; i < HW; ++i)
          dx[base + i] += k * (dy[base + i] - mean_dy - xhat[base + i] * mean_dy_xhat);
      }
    }
  });
}

template <typename T>
void bn_eval_kernel(const T* x, const T* gamma, const T* beta, const T* rm, const T* rv, T* y,
                    int B, int C, int HW, double eps) {
  detail::parallel_for(C, 4, [&](long c) {
    const T istd = static_cast<T>(1.0 / std::sqrt(static_cast<double>(rv[c]) + eps));
    const T g = gamma[c], bt = beta[c], mean = rm[c];
    for (int b = 0; b < B; ++b) {
      const size_t base = (static_cast<size_t>(b) * C + c) * HW;
      for (int i = 0; i < HW; ++i) y[base + i] = g * (x[base + i] - mean) * istd + bt;
    }
  });
}

}  // namespace

Tensor bn_forward_train(const Tensor& x, BatchNormState& state, Tape* tape) {
  if (state.mode != BnMode::train)
    throw UsageError("bn_forward_train called on a state in eval mode");
  if (x.rank() != 4) throw ShapeError("bn_forward_train: expected [B,C,H,W]");
  const int B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (C != state.features())
    throw ShapeError("bn_forward_train: input has " + std::to_string(C) +
                     " features, state has " + std::to_string(state.features()));
  if (static_cast<size_t>(B) * HW < 2)
    throw UsageError("bn_forward_train: degenerate batch, need at least 2 values per feature");

  const Dtype dt = x.dtype();
  Tensor out = Tensor::zeros(x.shape(), dt);
  Tensor xhat = Tensor::zeros(x.shape(), dt);
  Tensor inv_std = Tensor::zeros({C}, dt);
  Tensor bmean = Tensor::zeros({C}, dt);
  Tensor bvar = Tensor::zeros({C}, dt);

  if (dt == Dtype::f32)
    bn_train_kernel(x.data<float>(), state.gamma.data<float>(), state.beta.data<float>(),
                    out.data<float>(), xhat.data<float>(), inv_std.data<float>(),
                    bmean.data<float>(), bvar.data<float>(), B, C, HW, state.eps);
  else
    bn_train_kernel(x.data<double>(), state.gamma.data<double>(), state.beta.data<double>(),
                    out.data<double>(), xhat.data<double>(), inv_std.data<double>(),
                    bmean.data<double>(), bvar.data<double>(), B, C, HW, state.eps);

  // EMA update of the eval statistics; these track the frozen features even
  // when gamma/beta are themselves frozen, so they live outside the tape.
  const double m = state.momentum;
  for (int c = 0; c < C; ++c) {
    const size_t ci = static_cast<size_t>(c);
    state.running_mean.set_value(ci,
                                 (1.0 - m) * state.running_mean.value_at(ci) + m * bmean.value_at(ci));
    state.running_var.set_value(ci,
                                (1.0 - m) * state.running_var.value_at(ci) + m * bvar.value_at(ci));
  }
  state.stats_ready = true;

  const bool any_grad = x.requires_grad() || state.gamma.requires_grad() ||
                        state.beta.requires_grad();
  if (tape && any_grad) {
    out.set_requires_grad(true);
    tape->note_produced(out);
    Tensor xin = x, g = state.gamma, bt = state.beta, y = out;
    tape->record([xin, g, bt, y, xhat, inv_std, B, C, HW]() mutable {
      if (y.dtype() == Dtype::f32)
        bn_train_backward(y.grad<float>(), xhat.data<float>(), inv_std.data<float>(),
                          g.data<float>(), xin.requires_grad() ? xin.grad<float>() : nullptr,
                          g.requires_grad() ? g.grad<float>() : nullptr,
                          bt.requires_grad() ? bt.grad<float>() : nullptr, B, C, HW);
      else
        bn_train_backward(y.grad<double>(), xhat.data<double>(), inv_std.data<double>(),
                          g.data<double>(), xin.requires_grad() ? xin.grad<double>() : nullptr,
                          g.requires_grad() ? g.grad<double>() : nullptr,
                          bt.requires_grad() ? bt.grad<double>() : nullptr, B, C, HW);
    });
  }
  return out;
}

Tensor bn_forward_eval(const Tensor& x, const BatchNormState& state) {
  if (state.mode != BnMode::eval)
    throw UsageError("bn_forward_eval called on a state in train mode");
  if (!state.stats_ready)
    throw UsageError("bn_forward_eval: running statistics were never populated or loaded");
  if (x.rank() != 4) throw ShapeError("bn_forward_eval: expected [B,C,H,W]");
  const int B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (C != state.features())
    throw ShapeError("bn_forward_eval: input has " + std::to_string(C) + " features, state has " +
                     std::to_string(state.features()));

  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  if (x.dtype() == Dtype::f32)
    bn_eval_kernel(x.data<float>(), state.gamma.data<float>(), state.beta.data<float>(),
                   state.running_mean.data<float>(), state.running_var.data<float>(),
                   out.data<float>(), B, C, HW, state.eps);
  else
    bn_eval_kernel(x.data<double>(), state.gamma.data<double>(), state.beta.data<double>(),
                   state.running_mean.data<double>(), state.running_var.data<double>(),
                   out.data<double>(), B, C, HW, state.eps);
  return out;
}

}  // namespace bnlab
