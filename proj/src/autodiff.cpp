#include "bnlab/autodiff.hpp"

namespace bnlab {

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.impl()->producer != this)
    throw UsageError("backward: tensor was not produced on this tape");
  if (loss.numel() != 1)
    throw UsageError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));

  // Intermediates restart from zero each pass; leaves keep accumulating.
  for (auto& impl : produced_) {
    if (!impl->has_grad) continue;
    if (impl->dtype == Dtype::f32)
      impl->g32.assign(impl->n, 0.0f);
    else
      impl->g64.assign(impl->n, 0.0);
  }

  Tensor seed = loss;
  if (seed.dtype() == Dtype::f32)
    seed.grad<float>()[0] += 1.0f;
  else
    seed.grad<double>()[0] += 1.0;

  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

}  // namespace bnlab
