#include <doctest.h>

#include <cmath>

#include "bnlab/batchnorm.hpp"
#include "bnlab/ops.hpp"
#include "testutil.hpp"

using namespace bnlab;
using testutil::random_tensor;

namespace {

// Empirical per-feature mean/std (population) of a [B,C,H,W] tensor.
void feature_moments(const Tensor& t, int c, double& mean, double& stddev) {
  const int B = t.dim(0), C = t.dim(1), HW = t.dim(2) * t.dim(3);
  const size_t n = static_cast<size_t>(B) * HW;
  double sum = 0;
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < HW; ++i)
      sum += t.value_at((static_cast<size_t>(b) * C + c) * HW + i);
  mean = sum / static_cast<double>(n);
  double var = 0;
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < HW; ++i) {
      const double d = t.value_at((static_cast<size_t>(b) * C + c) * HW + i) - mean;
      var += d * d;
    }
  stddev = std::sqrt(var / static_cast<double>(n));
}

}  // namespace

TEST_CASE("bn_init schemes") {
  Prng rng(1);

  BatchNormState one_one = bn_init(4, BnInit::one_one, rng, Dtype::f64);
  for (size_t i = 0; i < 4; ++i) {
    CHECK(one_one.gamma.value_at(i) == 1.0);
    CHECK(one_one.beta.value_at(i) == 1.0);
  }

  BatchNormState u01 = bn_init(1000, BnInit::uniform01_zero, rng, Dtype::f64);
  for (size_t i = 0; i < 1000; ++i) {
    CHECK(u01.gamma.value_at(i) >= 0.0);
    CHECK(u01.gamma.value_at(i) < 1.0);
    CHECK(u01.beta.value_at(i) == 0.0);
  }

  BatchNormState sym = bn_init(1000, BnInit::uniform_sym_zero, rng, Dtype::f64);
  bool any_negative = false;
  for (size_t i = 0; i < 1000; ++i) {
    CHECK(sym.gamma.value_at(i) >= -1.0);
    CHECK(sym.gamma.value_at(i) < 1.0);
    any_negative |= sym.gamma.value_at(i) < 0.0;
  }
  CHECK(any_negative);

  BatchNormState oz = bn_init(8, BnInit::one_zero, rng, Dtype::f64);
  for (size_t i = 0; i < 8; ++i) {
    CHECK(oz.gamma.value_at(i) == 1.0);
    CHECK(oz.beta.value_at(i) == 0.0);
  }

  // Same seed twice gives identical gamma draws.
  Prng r1(99), r2(99);
  BatchNormState a = bn_init(64, BnInit::uniform01_zero, r1, Dtype::f32);
  BatchNormState b = bn_init(64, BnInit::uniform01_zero, r2, Dtype::f32);
  for (size_t i = 0; i < 64; ++i) CHECK(a.gamma.value_at(i) == b.gamma.value_at(i));

  // Fresh state: running_mean 0, running_var 1, stats not yet usable.
  CHECK(a.running_mean.value_at(0) == 0.0);
  CHECK(a.running_var.value_at(0) == 1.0);
  CHECK_FALSE(a.stats_ready);
}

TEST_CASE("train-mode constant input collapses to beta") {
  Prng rng(2);
  BatchNormState st = bn_init(2, BnInit::uniform01_zero, rng, Dtype::f64);
  st.beta.set_value(0, 0.5);
  st.beta.set_value(1, 0.5);
  Tensor x = Tensor::full({4, 2, 3, 3}, 3.25, Dtype::f64);
  Tensor y = bn_forward_train(x, st);
  for (size_t i = 0; i < y.numel(); ++i)
    CHECK(std::fabs(y.value_at(i) - 0.5) <= 1e-3);
}

TEST_CASE("train-mode balanced +-1 input with gamma 2") {
  Prng rng(3);
  BatchNormState st = bn_init(1, BnInit::one_zero, rng, Dtype::f64);
  st.gamma.set_value(0, 2.0);
  Tensor x = Tensor::zeros({2, 1, 2, 2}, Dtype::f64);
  for (size_t i = 0; i < 8; ++i) x.set_value(i, i % 2 == 0 ? -1.0 : 1.0);
  Tensor y = bn_forward_train(x, st);
  for (size_t i = 0; i < 8; ++i)
    CHECK(std::fabs(std::fabs(y.value_at(i)) - 2.0) < 1e-4);
}

TEST_CASE("train-mode output moments: mean beta, std |gamma|") {
  Prng rng(4);
  const int C = 6;
  BatchNormState st = bn_init(C, BnInit::uniform01_zero, rng, Dtype::f64);
  for (int c = 0; c < C; ++c) st.beta.set_value(static_cast<size_t>(c), 0.1 * c - 0.2);
  st.gamma.set_value(1, -0.7);  // negative gamma: std still |gamma|

  Tensor x = random_tensor({16, C, 8, 8}, rng, 2.0);
  Tensor y = bn_forward_train(x, st);
  for (int c = 0; c < C; ++c) {
    double mean, stddev;
    feature_moments(y, c, mean, stddev);
    CHECK(std::fabs(mean - st.beta.value_at(static_cast<size_t>(c))) < 1e-5);
    CHECK(std::fabs(stddev - std::fabs(st.gamma.value_at(static_cast<size_t>(c)))) < 1e-3);
  }
}

TEST_CASE("gamma zero disables the feature and its input gradient") {
  Prng rng(5);
  BatchNormState st = bn_init(2, BnInit::uniform01_zero, rng, Dtype::f64);
  st.gamma.set_value(0, 0.0);
  st.beta.set_value(0, 0.25);

  Tensor x = random_tensor({3, 2, 4, 4}, rng).set_requires_grad(true);
  Tape tape;
  Tensor y = bn_forward_train(x, st, &tape);
  const int HW = 16;
  for (int b = 0; b < 3; ++b)
    for (int i = 0; i < HW; ++i)
      CHECK(y.value_at((static_cast<size_t>(b) * 2 + 0) * HW + i) == 0.25);

  Tensor loss = ops::sum(y, &tape);
  tape.backward(loss);
  // Channel 0 input gradient must be exactly zero.
  for (int b = 0; b < 3; ++b)
    for (int i = 0; i < HW; ++i)
      CHECK(x.grad_at((static_cast<size_t>(b) * 2 + 0) * HW + i) == 0.0);
}

TEST_CASE("affine-input equivariance") {
  Prng rng(6);
  BatchNormState st = bn_init(3, BnInit::uniform01_zero, rng, Dtype::f64);
  Tensor x = random_tensor({8, 3, 6, 6}, rng, 1.5);

  Prng rng2(6);
  BatchNormState st2 = bn_init(3, BnInit::uniform01_zero, rng2, Dtype::f64);

  Tensor y1 = bn_forward_train(x, st);

  // Per-feature a*x + b with a > 0 leaves the normalized output unchanged.
  const double a[3] = {2.0, 0.5, 3.5};
  const double b[3] = {-1.0, 0.3, 10.0};
  Tensor x2 = Tensor::zeros(x.shape(), Dtype::f64);
  const int HW = 36;
  for (int n = 0; n < 8; ++n)
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < HW; ++i) {
        const size_t idx = (static_cast<size_t>(n) * 3 + c) * HW + i;
        x2.set_value(idx, a[c] * x.value_at(idx) + b[c]);
      }
  Tensor y2 = bn_forward_train(x2, st2);
  CHECK(testutil::max_abs_diff(y1, y2) <= 1e-4);
}

TEST_CASE("eval uses running statistics") {
  Prng rng(7);
  BatchNormState st = bn_init(2, BnInit::one_zero, rng, Dtype::f64);

  // Eval before any update is an error.
  Tensor x = random_tensor({4, 2, 3, 3}, rng);
  st.mode = BnMode::eval;
  CHECK_THROWS_AS(bn_forward_eval(x, st), UsageError);

  // Identity statistics reproduce the input up to eps scaling.
  st.stats_ready = true;  // explicitly loaded
  Tensor y = bn_forward_eval(x, st);
  for (size_t i = 0; i < y.numel(); ++i)
    CHECK(y.value_at(i) == doctest::Approx(x.value_at(i)).epsilon(1e-4));

  // gamma = 0 pins the output at beta regardless of input.
  BatchNormState zero = bn_init(2, BnInit::one_zero, rng, Dtype::f64);
  zero.gamma.set_value(0, 0.0);
  zero.gamma.set_value(1, 0.0);
  zero.beta.set_value(0, 1.5);
  zero.beta.set_value(1, -2.0);
  zero.mode = BnMode::eval;
  zero.stats_ready = true;
  Tensor yz = bn_forward_eval(x, zero);
  const int HW = 9;
  for (int b = 0; b < 4; ++b)
    for (int i = 0; i < HW; ++i) {
      CHECK(yz.value_at((static_cast<size_t>(b) * 2 + 0) * HW + i) == 1.5);
      CHECK(yz.value_at((static_cast<size_t>(b) * 2 + 1) * HW + i) == -2.0);
    }
}

TEST_CASE("one train step with momentum 1 makes eval reproduce train output") {
  Prng rng(8);
  BatchNormState st = bn_init(3, BnInit::uniform01_zero, rng, Dtype::f64);
  st.momentum = 1.0;
  Tensor x = random_tensor({8, 3, 4, 4}, rng, 2.0);
  Tensor y_train = bn_forward_train(x, st);
  st.mode = BnMode::eval;
  Tensor y_eval = bn_forward_eval(x, st);
  CHECK(testutil::max_abs_diff(y_train, y_eval) < 1e-5);
}

TEST_CASE("running statistics EMA coefficient") {
  Prng rng(9);
  BatchNormState st = bn_init(1, BnInit::one_zero, rng, Dtype::f64);
  st.momentum = 0.1;
  // Batch with mean 10, biased variance 4 (values 8 and 12).
  Tensor x = Tensor::zeros({2, 1, 1, 2}, Dtype::f64);
  x.set_value(0, 8);
  x.set_value(1, 12);
  x.set_value(2, 8);
  x.set_value(3, 12);
  bn_forward_train(x, st);
  CHECK(st.running_mean.value_at(0) == doctest::Approx(0.9 * 0.0 + 0.1 * 10.0));
  CHECK(st.running_var.value_at(0) == doctest::Approx(0.9 * 1.0 + 0.1 * 4.0));
  CHECK(st.stats_ready);
}

TEST_CASE("degenerate batch and mode misuse are errors") {
  Prng rng(10);
  BatchNormState st = bn_init(1, BnInit::one_zero, rng, Dtype::f64);
  Tensor single = Tensor::zeros({1, 1, 1, 1}, Dtype::f64);
  CHECK_THROWS_AS(bn_forward_train(single, st), UsageError);

  Tensor ok = Tensor::zeros({2, 1, 1, 1}, Dtype::f64);
  CHECK_NOTHROW(bn_forward_train(ok, st));

  st.mode = BnMode::eval;
  CHECK_THROWS_AS(bn_forward_train(ok, st), UsageError);
  st.mode = BnMode::train;
  CHECK_THROWS_AS(bn_forward_eval(ok, st), UsageError);
}
