#include "lgr/nn/tensor.hpp"

#include "lgr/error.hpp"

#include <cmath>

namespace lgr::nn {

std::string shape_string(const Shape& s, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += sep;
    out += std::to_string(s[i]);
  }
  return out;
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (static_cast<long>(data_.size()) != nn::numel(shape_)) throw Error("tensor data size does not match shape");
}

Tensor Tensor::reshaped(Shape shape) const {
  if (nn::numel(shape) != numel())
    throw Error("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  return Tensor(std::move(shape), data_);
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (other.shape_ != shape_) throw Error("tensor shape mismatch in +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace lgr::nn
