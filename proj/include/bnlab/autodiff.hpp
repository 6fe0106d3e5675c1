#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "bnlab/tensor.hpp"

namespace bnlab {

// Reverse-mode tape. Operations append themselves in execution order, so the
// record is topologically sorted by construction; backward() walks it once in
// reverse. The tape owns the tensors produced on it (keeping the graph alive)
// and resets their accumulators at the start of every backward pass, so leaf
// gradients accumulate across repeated backward() calls while intermediate
// contributions are never double-counted.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> backward_fn) { ops_.push_back(std::move(backward_fn)); }

  // Marks `t` as produced by an op recorded on this tape.
  void note_produced(const Tensor& t) {
    t.impl()->producer = this;
    produced_.push_back(t.impl_ptr());
  }

  bool produced(const Tensor& t) const { return t.impl()->producer == this; }

  // Seeds d(loss)/d(loss) = 1 and runs every recorded op exactly once in
  // reverse order. `loss` must be a scalar produced on this tape.
  void backward(const Tensor& loss);

  size_t num_ops() const { return ops_.size(); }

 private:
  std::vector<std::function<void()>> ops_;
  std::vector<std::shared_ptr<detail::TensorImpl>> produced_;
};

}  // namespace bnlab
