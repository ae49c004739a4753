#pragma once

#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace lgr::nn {

using Shape = std::vector<int>;

std::string shape_string(const Shape& s, const char* sep = "x");
inline long numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), 1L, [](long a, int b) { return a * b; });
}

// Dense row-major tensor of doubles. Activations are 5-D (N, C, D, H, W);
// 2-D layers run with D = 1.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(static_cast<std::size_t>(nn::numel(shape_)), fill) {}
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  int dim(std::size_t i) const { return shape_[i]; }
  std::size_t rank() const { return shape_.size(); }
  long numel() const { return static_cast<long>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](long i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](long i) const { return data_[static_cast<std::size_t>(i)]; }

  // Same data, new shape with equal element count.
  Tensor reshaped(Shape shape) const;
  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(0.0); }
  Tensor& operator+=(const Tensor& other);

  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// A trainable tensor with its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  // Normalization parameters are excluded from weight decay.
  bool decay = true;

  Parameter(std::string n, Shape shape, bool decay_ = true)
      : name(std::move(n)), value(shape), grad(shape), decay(decay_) {}
};

// Non-trainable state saved with a checkpoint (batch-norm running stats).
struct Buffer {
  std::string name;
  Tensor value;
};

}  // namespace lgr::nn
