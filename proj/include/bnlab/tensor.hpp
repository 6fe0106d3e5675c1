#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "bnlab/errors.hpp"

namespace bnlab {

class Tape;

enum class Dtype { f32, f64 };

inline size_t dtype_size(Dtype d) { return d == Dtype::f32 ? 4 : 8; }
inline const char* dtype_name(Dtype d) { return d == Dtype::f32 ? "f32" : "f64"; }

size_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

namespace detail {

struct TensorImpl {
  std::vector<int> shape;
  Dtype dtype = Dtype::f32;
  size_t n = 0;
  std::vector<float> f32;
  std::vector<double> f64;
  // Gradient accumulator: allocated on demand, always same shape/dtype.
  std::vector<float> g32;
  std::vector<double> g64;
  bool has_grad = false;
  bool requires_grad = false;
  const Tape* producer = nullptr;  // tape that recorded the producing op
};

}  // namespace detail

// Dense row-major tensor. Value semantics over a shared payload: copying a
// Tensor aliases the same storage, clone() deep-copies. Values are written
// once by the producing op; only the gradient accumulator mutates afterwards.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, Dtype dt = Dtype::f32);
  static Tensor full(std::vector<int> shape, double value, Dtype dt = Dtype::f32);
  static Tensor from_values(std::vector<int> shape, const std::vector<double>& values,
                            Dtype dt = Dtype::f32);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const { return impl_->shape; }
  int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  size_t numel() const { return impl_->n; }
  Dtype dtype() const { return impl_->dtype; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool rg) {
    impl_->requires_grad = rg;
    return *this;
  }

  template <typename T>
  T* data();
  template <typename T>
  const T* data() const;

  // Gradient access. grad<T>() allocates a zeroed accumulator on first use.
  template <typename T>
  T* grad();
  template <typename T>
  const T* grad() const;  // nullptr when not allocated

  bool grad_allocated() const { return impl_->has_grad; }
  void ensure_grad();
  void zero_grad();

  // Flat-index scalar convenience (dtype-dispatching, for tests and glue).
  double value_at(size_t i) const;
  void set_value(size_t i, double v);
  double grad_at(size_t i) const;  // 0 when no accumulator

  Tensor clone() const;      // deep copy of values; fresh (absent) gradient
  Tensor to(Dtype dt) const;

  // Raw little-endian payload view for serialization and bit comparisons.
  const void* raw_data() const;
  void* raw_data();
  size_t raw_size() const { return impl_->n * dtype_size(impl_->dtype); }

  detail::TensorImpl* impl() const { return impl_.get(); }
  std::shared_ptr<detail::TensorImpl> impl_ptr() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
};

template <>
inline float* Tensor::data<float>() {
  if (impl_->dtype != Dtype::f32) throw UsageError("tensor is not f32");
  return impl_->f32.data();
}
template <>
inline double* Tensor::data<double>() {
  if (impl_->dtype != Dtype::f64) throw UsageError("tensor is not f64");
  return impl_->f64.data();
}
template <>
inline const float* Tensor::data<float>() const {
  if (impl_->dtype != Dtype::f32) throw UsageError("tensor is not f32");
  return impl_->f32.data();
}
template <>
inline const double* Tensor::data<double>() const {
  if (impl_->dtype != Dtype::f64) throw UsageError("tensor is not f64");
  return impl_->f64.data();
}

template <>
inline float* Tensor::grad<float>() {
  ensure_grad();
  return impl_->g32.data();
}
template <>
inline double* Tensor::grad<double>() {
  ensure_grad();
  return impl_->g64.data();
}
template <>
inline const float* Tensor::grad<float>() const {
  return impl_->has_grad ? impl_->g32.data() : nullptr;
}
template <>
inline const double* Tensor::grad<double>() const {
  return impl_->has_grad ? impl_->g64.data() : nullptr;
}

}  // namespace bnlab
