#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace wm {

// Dense row-major double tensor. Rank is dynamic; the layer code uses
// (N,C,H,W) for feature maps and (N,D) for vectors.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::initializer_list<std::size_t> shape)
      : Tensor(std::vector<std::size_t>(shape)) {}

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor scalar(double value);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  std::size_t numel() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Reinterprets the buffer with a new shape of equal element count.
  Tensor reshaped(std::vector<std::size_t> shape) const;

  void fill(double value);
  void zero() { fill(0.0); }
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  double min() const;
  double max() const;
  double sum() const;
  double mean() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Elementwise helpers used throughout the model code.
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);
// mean((a-b)^2)
double mse(const Tensor& a, const Tensor& b);
// clamp to [0,1] in place
void clamp01(Tensor& t);

}  // namespace wm
