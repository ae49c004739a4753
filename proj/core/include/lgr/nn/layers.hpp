#pragma once

#include "lgr/nn/tensor.hpp"
#include "lgr/rng.hpp"

#include <array>
#include <memory>
#include <string>
#include <vector>

namespace lgr::nn {

using Triple = std::array<int, 3>;  // (depth, height, width)

// Stateful differentiable op: forward() caches what backward() needs, so
// calls must alternate forward/backward on one instance.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, bool training) = 0;
  // Returns dL/dx and accumulates parameter gradients.
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual Shape output_shape(const Shape& in) const = 0;
  virtual void collect(std::vector<Parameter*>&, std::vector<Buffer*>&) {}
};

class Conv3d : public Layer {
 public:
  Conv3d(std::string name, int in_channels, int out_channels, Triple kernel, Triple stride, Triple padding,
         bool bias, Rng& rng);

  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  Shape output_shape(const Shape& in) const override;
  void collect(std::vector<Parameter*>& p, std::vector<Buffer*>&) override;

  Parameter& weight() { return weight_; }
  int out_channels() const { return out_; }
  // Used for zero-initialized output heads.
  void zero_parameters();

 private:
  int in_, out_;
  Triple k_, s_, p_;
  Parameter weight_;
  std::unique_ptr<Parameter> bias_;
  Tensor input_;
};

// Batch normalization over (N, D, H, W) per channel. Training mode uses batch
// statistics and updates running statistics; evaluation uses running ones.
class BatchNorm : public Layer {
 public:
  BatchNorm(std::string name, int channels, double momentum = 0.1, double eps = 1e-5);

  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  Shape output_shape(const Shape& in) const override { return in; }
  void collect(std::vector<Parameter*>& p, std::vector<Buffer*>& b) override;

 private:
  int channels_;
  double momentum_, eps_;
  Parameter gamma_, beta_;
  Buffer running_mean_, running_var_;
  Tensor xhat_;
  std::vector<double> inv_std_;
  bool cached_training_ = true;
};

class ReLU : public Layer {
 public:
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  Shape output_shape(const Shape& in) const override { return in; }

 private:
  std::vector<bool> active_;
  Shape shape_;
};

// Hard clamp to [0, 1]; gradient passes only where the input is inside.
class Clamp01 : public Layer {
 public:
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  Shape output_shape(const Shape& in) const override { return in; }

 private:
  std::vector<bool> inside_;
  Shape shape_;
};

// Max pooling with implicit -inf padding; ties go to the first maximum.
class MaxPool3d : public Layer {
 public:
  MaxPool3d(Triple kernel, Triple stride, Triple padding) : k_(kernel), s_(stride), p_(padding) {}
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  Shape output_shape(const Shape& in) const override;

 private:
  Triple k_, s_, p_;
  Shape in_shape_;
  std::vector<long> argmax_;
};

// Nearest-neighbour 2x upsampling of H and W.
class Upsample2x : public Layer {
 public:
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  Shape output_shape(const Shape& in) const override;
};

// (N, C, D, H, W) -> (N, C).
class GlobalAvgPool : public Layer {
 public:
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  Shape output_shape(const Shape& in) const override { return {in[0], in[1]}; }

 private:
  Shape in_shape_;
};

class Linear : public Layer {
 public:
  Linear(std::string name, int in_features, int out_features, Rng& rng);
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  Shape output_shape(const Shape& in) const override { return {in[0], out_}; }
  void collect(std::vector<Parameter*>& p, std::vector<Buffer*>&) override;

 private:
  int in_, out_;
  Parameter weight_, bias_;
  Tensor input_;
};

// Runs layers in order.
class Sequential : public Layer {
 public:
  Sequential() = default;
  Sequential& add(std::unique_ptr<Layer> layer);
  template <typename L, typename... Args>
  Sequential& emplace(Args&&... args) {
    return add(std::make_unique<L>(std::forward<Args>(args)...));
  }

  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  Shape output_shape(const Shape& in) const override;
  void collect(std::vector<Parameter*>& p, std::vector<Buffer*>& b) override;
  bool empty() const { return layers_.empty(); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// conv (no bias) + batch norm + ReLU.
std::unique_ptr<Sequential> conv_bn_relu(const std::string& name, int in, int out, Triple kernel, Triple stride,
                                         Triple padding, Rng& rng);

// Channel concatenation of two (N, C, D, H, W) tensors and its inverse.
Tensor concat_channels(const Tensor& a, const Tensor& b);
std::pair<Tensor, Tensor> split_channels(const Tensor& x, int channels_a);

// Mean softmax cross-entropy over the batch; grad receives dL/dlogits.
double cross_entropy(const Tensor& logits, const std::vector<int>& labels, Tensor* grad = nullptr);

// Lowest index wins ties.
int argmax_row(const Tensor& logits, int row);

}  // namespace lgr::nn
