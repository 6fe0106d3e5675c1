#pragma once

#include "bnlab/autodiff.hpp"
#include "bnlab/prng.hpp"
#include "bnlab/tensor.hpp"

namespace bnlab {

// Affine initialization schemes for (gamma, beta).
enum class BnInit {
  uniform01_zero,   // gamma ~ U[0,1), beta = 0 (default)
  one_zero,         // gamma = 1, beta = 0
  uniform_sym_zero, // gamma ~ U[-1,1), beta = 0
  one_one,          // gamma = 1, beta = 1
};

const char* bn_init_name(BnInit s);
BnInit bn_init_parse(const std::string& name);

enum class BnMode { train, eval };

// Per-feature normalization state. gamma/beta are trainable parameters;
// running_mean/running_var are eval-time statistics updated by EMA with
// coefficient `momentum` (r <- (1-m)*r + m*batch_stat) and are never touched
// by the optimizer.
struct BatchNormState {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  double eps = 1e-5;
  double momentum = 0.1;
  BnMode mode = BnMode::train;
  // Eval requires statistics that were either produced by at least one
  // train-mode pass or explicitly loaded (e.g. from a checkpoint).
  bool stats_ready = false;

  int features() const { return gamma.dim(0); }
};

// gamma/beta per `scheme`; running_mean = 0, running_var = 1.
BatchNormState bn_init(int channels, BnInit scheme, Prng& rng, Dtype dt = Dtype::f32);

// Train-mode forward over [B,C,H,W]: per feature c, normalize by the biased
// batch statistics over all batch and spatial positions (n = B*H*W), apply
// gamma_c * xhat + beta_c, and update the running statistics. Differentiable
// with respect to x, gamma and beta.
Tensor bn_forward_train(const Tensor& x, BatchNormState& state, Tape* tape = nullptr);

// Eval-mode forward: same affine formula with running statistics; no updates.
Tensor bn_forward_eval(const Tensor& x, const BatchNormState& state);

}  // namespace bnlab
