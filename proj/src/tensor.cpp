#include "wm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "wm/kernels.hpp"

namespace wm {

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
  std::size_t n = 1;
  for (std::size_t d : shape_) n *= d;
  data_.assign(n, 0.0);
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::scalar(double value) {
  Tensor t({1});
  t[0] = value;
  return t;
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  if (n != numel()) throw std::invalid_argument("reshape: element count mismatch");
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

double Tensor::min() const {
  return *std::min_element(data_.begin(), data_.end());
}

double Tensor::max() const {
  return *std::max_element(data_.begin(), data_.end());
}

double Tensor::sum() const { return kernels::ops().sum(data_.data(), data_.size()); }

double Tensor::mean() const { return numel() ? sum() / double(numel()) : 0.0; }

Tensor operator+(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("tensor add: shape mismatch");
  Tensor out = a;
  kernels::ops().add(b.data(), out.data(), out.numel());
  return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("tensor sub: shape mismatch");
  Tensor out = a;
  kernels::ops().axpy(-1.0, b.data(), out.data(), out.numel());
  return out;
}

Tensor operator*(double s, const Tensor& a) {
  Tensor out = a;
  kernels::ops().scale(s, out.data(), out.numel());
  return out;
}

double mse(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("mse: shape mismatch");
  if (a.numel() == 0) return 0.0;
  return kernels::ops().sqdiff_sum(a.data(), b.data(), a.numel()) / double(a.numel());
}

void clamp01(Tensor& t) { kernels::ops().clamp01(t.data(), t.numel()); }

}  // namespace wm
