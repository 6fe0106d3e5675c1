#include "bnlab/tensor.hpp"

#include <sstream>

namespace bnlab {

size_t shape_numel(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
    n *= static_cast<size_t>(d);
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(std::vector<int> shape, Dtype dt) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->n = shape_numel(shape);
  impl->shape = std::move(shape);
  impl->dtype = dt;
  if (dt == Dtype::f32)
    impl->f32.assign(impl->n, 0.0f);
  else
    impl->f64.assign(impl->n, 0.0);
  return Tensor(std::move(impl));
}

Tensor Tensor::full(std::vector<int> shape, double value, Dtype dt) {
  Tensor t = zeros(std::move(shape), dt);
  if (dt == Dtype::f32)
    t.impl()->f32.assign(t.numel(), static_cast<float>(value));
  else
    t.impl()->f64.assign(t.numel(), value);
  return t;
}

Tensor Tensor::from_values(std::vector<int> shape, const std::vector<double>& values, Dtype dt) {
  Tensor t = zeros(std::move(shape), dt);
  if (values.size() != t.numel())
    throw ShapeError("value count " + std::to_string(values.size()) + " does not fill shape " +
                     shape_str(t.shape()));
  for (size_t i = 0; i < values.size(); ++i) t.set_value(i, values[i]);
  return t;
}

void Tensor::ensure_grad() {
  if (impl_->has_grad) return;
  if (impl_->dtype == Dtype::f32)
    impl_->g32.assign(impl_->n, 0.0f);
  else
    impl_->g64.assign(impl_->n, 0.0);
  impl_->has_grad = true;
}

void Tensor::zero_grad() {
  if (!impl_->has_grad) return;
  if (impl_->dtype == Dtype::f32)
    impl_->g32.assign(impl_->n, 0.0f);
  else
    impl_->g64.assign(impl_->n, 0.0);
}

double Tensor::value_at(size_t i) const {
  return impl_->dtype == Dtype::f32 ? static_cast<double>(impl_->f32[i]) : impl_->f64[i];
}

void Tensor::set_value(size_t i, double v) {
  if (impl_->dtype == Dtype::f32)
    impl_->f32[i] = static_cast<float>(v);
  else
    impl_->f64[i] = v;
}

double Tensor::grad_at(size_t i) const {
  if (!impl_->has_grad) return 0.0;
  return impl_->dtype == Dtype::f32 ? static_cast<double>(impl_->g32[i]) : impl_->g64[i];
}

Tensor Tensor::clone() const {
  Tensor t = zeros(impl_->shape, impl_->dtype);
  t.impl()->f32 = impl_->f32;
  t.impl()->f64 = impl_->f64;
  t.impl()->requires_grad = impl_->requires_grad;
  return t;
}

Tensor Tensor::to(Dtype dt) const {
  if (dt == impl_->dtype) return clone();
  Tensor t = zeros(impl_->shape, dt);
  for (size_t i = 0; i < impl_->n; ++i) t.set_value(i, value_at(i));
  t.impl()->requires_grad = impl_->requires_grad;
  return t;
}

const void* Tensor::raw_data() const {
  return impl_->dtype == Dtype::f32 ? static_cast<const void*>(impl_->f32.data())
                                    : static_cast<const void*>(impl_->f64.data());
}

void* Tensor::raw_data() {
  return impl_->dtype == Dtype::f32 ? static_cast<void*>(impl_->f32.data())
                                    : static_cast<void*>(impl_->f64.data());
}

}  // namespace bnlab
