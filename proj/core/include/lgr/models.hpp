#pragma once

#include "lgr/nn/layers.hpp"
#include "lgr/nn/tensor.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace lgr::models {

using nn::Shape;
using nn::Tensor;

enum class ModelKind { sfe, resnet3d, raw3dnet, unet_restorer };
const char* to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

struct ModelSpec {
  ModelKind kind = ModelKind::raw3dnet;
  int channels = 1;
  int length = 8;
  int height = 240;
  int width = 320;
  // Encoder widths per level; the SFE has one pooling level.
  std::vector<int> sfe_widths{16, 32};
  std::vector<int> resnet_widths{64, 128, 256};
  int stem_kernel = 7;
  int num_classes = 9;
  // U-Net restorer: SFE topology with doubled widths, three pooling levels.
  std::vector<int> unet_widths{32, 64, 128, 256};
  bool zero_init_output = false;

  static ModelSpec defaults(ModelKind kind);
  // Width-reduced variant for desk-scale runs.
  static ModelSpec reduced(ModelKind kind, int height, int width);

  bool is_classifier() const { return kind == ModelKind::resnet3d || kind == ModelKind::raw3dnet; }
  // Batch input shape: (N, 1, L, H, W) for classifiers, (N, 1, 1, H, W) otherwise.
  Shape input_shape(int batch = 1) const;
  void validate() const;
  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

void to_json(nlohmann::json& j, const ModelSpec& s);
void from_json(const nlohmann::json& j, ModelSpec& s);

// One line of a layer/shape table. Shapes omit the batch axis.
struct LayerRow {
  std::string layer;
  std::string op;
  std::vector<Shape> inputs;
  Shape output;
};

std::string format_shape(const Shape& s);
std::string format_table(const std::vector<LayerRow>& rows);

// Encoder-decoder over single frames (N, 1, 1, H, W) with one skip per level.
// widths[0] is the full-resolution width; widths.size() - 1 pooling levels.
class EncoderDecoder : public nn::Layer {
 public:
  EncoderDecoder(const std::string& prefix, std::vector<int> widths, bool zero_init_output, Rng& rng);

  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  Shape output_shape(const Shape& in) const override;
  void collect(std::vector<nn::Parameter*>& p, std::vector<nn::Buffer*>& b) override;

  // Table rows for a (1, H, W) frame; stage names follow the SFE table.
  std::vector<LayerRow> describe(int height, int width) const;
  int depth() const { return static_cast<int>(widths_.size()) - 1; }
  // Bottleneck activation of the most recent forward pass.
  const Tensor& bottleneck() const { return bottleneck_; }

 private:
  std::vector<int> widths_;
  std::unique_ptr<nn::Sequential> input_;
  std::vector<std::unique_ptr<nn::Sequential>> enc_;  // enc_[0] at full resolution
  std::vector<std::unique_ptr<nn::MaxPool3d>> pool_;  // pool_[l-1] feeds enc_[l]
  std::vector<std::unique_ptr<nn::Upsample2x>> up_;   // indexed by decoder level
  std::vector<std::unique_ptr<nn::Sequential>> up_conv_;
  std::vector<std::unique_ptr<nn::Sequential>> dec_;
  std::unique_ptr<nn::Conv3d> output_;
  std::vector<int> skip_channels_;
  Tensor bottleneck_;
};

// conv-BN-ReLU-conv-BN, add shortcut, ReLU. The shortcut is the identity when
// shapes match and a strided 1x1x1 projection + BN otherwise.
class ResidualUnit : public nn::Layer {
 public:
  ResidualUnit(const std::string& prefix, int in, int out, int stride, Rng& rng);
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  Shape output_shape(const Shape& in) const override;
  void collect(std::vector<nn::Parameter*>& p, std::vector<nn::Buffer*>& b) override;

 private:
  nn::Sequential main_;
  std::unique_ptr<nn::Sequential> shortcut_;
  nn::ReLU relu_;
};

class ResNet3d : public nn::Layer {
 public:
  ResNet3d(const std::string& prefix, const ModelSpec& spec, Rng& rng);
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  Shape output_shape(const Shape& in) const override;
  void collect(std::vector<nn::Parameter*>& p, std::vector<nn::Buffer*>& b) override;
  std::vector<LayerRow> describe(const Shape& clip) const;

  // Stage outputs of the most recent forward pass: stem+pool, layer1..3.
  const std::vector<Shape>& stage_shapes() const { return stage_shapes_; }

 private:
  int length_;
  int stem_kernel_;
  std::unique_ptr<nn::Sequential> stem_;
  nn::MaxPool3d pool_;
  std::vector<std::unique_ptr<ResidualUnit>> stages_;
  nn::GlobalAvgPool gap_;
  std::unique_ptr<nn::Linear> fc_;
  std::vector<Shape> stage_shapes_;
};

// A network with a parameter set. forward() takes a batch per
// ModelSpec::input_shape(); classifiers return (N, K) logits and restorers
// (N, 1, 1, H, W) frames.
class Model {
 public:
  virtual ~Model() = default;
  virtual Tensor forward(const Tensor& x, bool training) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual std::vector<LayerRow> describe() const = 0;

  const ModelSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  std::vector<nn::Parameter*> parameters();
  std::vector<nn::Buffer*> buffers();
  long parameter_count();
  void zero_grad();

 protected:
  Model(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)), seed_(seed) {}
  virtual void collect(std::vector<nn::Parameter*>& p, std::vector<nn::Buffer*>& b) = 0;

 private:
  ModelSpec spec_;
  std::uint64_t seed_;
};

class SfeModel : public Model {
 public:
  SfeModel(const ModelSpec& spec, std::uint64_t seed);
  Tensor forward(const Tensor& x, bool training) override { return net_.forward(x, training); }
  Tensor backward(const Tensor& g) override { return net_.backward(g); }
  std::vector<LayerRow> describe() const override;
  EncoderDecoder& net() { return net_; }

 protected:
  void collect(std::vector<nn::Parameter*>& p, std::vector<nn::Buffer*>& b) override { net_.collect(p, b); }

 private:
  Rng rng_;
  EncoderDecoder net_;
};

class ResNet3dModel : public Model {
 public:
  ResNet3dModel(const ModelSpec& spec, std::uint64_t seed);
  Tensor forward(const Tensor& x, bool training) override { return net_.forward(x, training); }
  Tensor backward(const Tensor& g) override { return net_.backward(g); }
  std::vector<LayerRow> describe() const override;
  ResNet3d& net() { return net_; }

 protected:
  void collect(std::vector<nn::Parameter*>& p, std::vector<nn::Buffer*>& b) override { net_.collect(p, b); }

 private:
  Rng rng_;
  ResNet3d net_;
};

// SFE applied to every frame with shared weights, frames re-stacked, then
// the 3D-ResNet.
class Raw3dNet : public Model {
 public:
  Raw3dNet(const ModelSpec& spec, std::uint64_t seed);
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& g) override;
  std::vector<LayerRow> describe() const override;

  EncoderDecoder& sfe() { return sfe_; }
  ResNet3d& resnet() { return resnet_; }
  // Per-frame SFE features stacked back to (N, 1, L, H, W).
  Tensor sfe_features(const Tensor& clips, bool training);

 protected:
  void collect(std::vector<nn::Parameter*>& p, std::vector<nn::Buffer*>& b) override;

 private:
  Rng rng_;
  EncoderDecoder sfe_;
  ResNet3d resnet_;
  Shape clip_shape_;
};

class UNetRestorer : public Model {
 public:
  UNetRestorer(const ModelSpec& spec, std::uint64_t seed);
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& g) override;
  std::vector<LayerRow> describe() const override;
  EncoderDecoder& net() { return net_; }

 protected:
  void collect(std::vector<nn::Parameter*>& p, std::vector<nn::Buffer*>& b) override { net_.collect(p, b); }

 private:
  Rng rng_;
  EncoderDecoder net_;
  nn::Clamp01 clamp_;
};

// Initialization is a deterministic function of (spec, seed).
std::unique_ptr<Model> build_model(const ModelSpec& spec, std::uint64_t seed);

// Layer/shape table at the spec geometry, by shape algebra (no forward pass).
std::vector<LayerRow> describe_spec(const ModelSpec& spec);

}  // namespace lgr::models
