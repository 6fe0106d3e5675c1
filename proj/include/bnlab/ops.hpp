#pragma once

#include <vector>

#include "bnlab/autodiff.hpp"
#include "bnlab/tensor.hpp"

namespace bnlab::ops {

// Differentiable operators. Each op registers a backward closure on `tape`
// when a tape is supplied and at least one input requires gradients; passing
// tape == nullptr runs inference-only. Reductions use one fixed loop nest per
// shape so single-threaded runs are bit-reproducible.

// 2-D cross-correlation, no bias. kernel is [Cout,Cin,kH,kW]; output spatial
// extent is floor((H + 2*padding - kH) / stride) + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding,
              Tape* tape = nullptr);

// Elementwise max(0, x). Subgradient at exactly 0 is 0.
Tensor relu(const Tensor& input, Tape* tape = nullptr);

// output[b,k] = sum_f input[b,f] * weight[k,f] + bias[k].
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias,
              Tape* tape = nullptr);

// Mean over spatial positions: [B,C,H,W] -> [B,C].
Tensor avgpool_global(const Tensor& input, Tape* tape = nullptr);

// Per-window maximum; gradient routes to the first maximal position in
// row-major window order.
Tensor maxpool2d(const Tensor& input, int window, int stride, int padding = 0,
                 Tape* tape = nullptr);

// Elementwise sum of same-shape tensors.
Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr);

// Per-channel bias broadcast over [B,C,H,W].
Tensor channel_bias(const Tensor& input, const Tensor& bias, Tape* tape = nullptr);

// Mean over the batch of -log softmax(logits)[label], stabilized by
// max-subtraction. Returns a scalar.
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                             Tape* tape = nullptr);

// Elementwise product and full-sum reduction (small compositions and tests).
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor sum(const Tensor& input, Tape* tape = nullptr);

}  // namespace bnlab::ops
