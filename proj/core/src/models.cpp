#include "lgr/models.hpp"

#include "lgr/clip.hpp"
#include "lgr/error.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace lgr::models {

using nn::Conv3d;
using nn::Sequential;
using nn::Triple;

const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::sfe: return "sfe";
    case ModelKind::resnet3d: return "resnet3d";
    case ModelKind::raw3dnet: return "raw3dnet";
    case ModelKind::unet_restorer: return "unet_restorer";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
  for (ModelKind k : {ModelKind::sfe, ModelKind::resnet3d, ModelKind::raw3dnet, ModelKind::unet_restorer})
    if (s == to_string(k)) return k;
  throw Error("unknown model kind: " + s);
}

ModelSpec ModelSpec::defaults(ModelKind kind) {
  ModelSpec s;
  s.kind = kind;
  return s;
}

ModelSpec ModelSpec::reduced(ModelKind kind, int height, int width) {
  ModelSpec s;
  s.kind = kind;
  s.height = height;
  s.width = width;
  s.sfe_widths = {4, 8};
  s.resnet_widths = {8, 12, 16};
  s.unet_widths = {4, 8, 16, 32};
  return s;
}

Shape ModelSpec::input_shape(int batch) const {
  if (is_classifier()) return {batch, channels, length, height, width};
  return {batch, channels, 1, height, width};
}

void ModelSpec::validate() const {
  if (channels != 1) throw Error("model: only single-channel input is supported");
  if (height <= 0 || width <= 0) throw Error("model: geometry must be positive");
  if (num_classes < 2) throw Error("model: need at least two classes");
  if (resnet_widths.size() != 3) throw Error("model: resnet needs three stage widths");
  if (sfe_widths.size() < 2) throw Error("model: SFE needs at least two widths");
  if (unet_widths.size() < 2) throw Error("model: U-Net needs at least two widths");
  auto check_div = [&](const std::vector<int>& widths, const char* what) {
    const int f = 1 << (widths.size() - 1);
    if (height % f || width % f)
      throw Error(fmt::format("model: {} geometry {}x{} not divisible by {}", what, height, width, f));
  };
  if (kind == ModelKind::sfe || kind == ModelKind::raw3dnet) check_div(sfe_widths, "SFE");
  if (kind == ModelKind::unet_restorer) check_div(unet_widths, "U-Net");
  if (is_classifier() && (height < 16 || width < 16))
    throw Error("model: classifier geometry must be at least 16x16");
}

void to_json(nlohmann::json& j, const ModelSpec& s) {
  j = {{"kind", to_string(s.kind)},       {"channels", s.channels},         {"length", s.length},
       {"height", s.height},              {"width", s.width},               {"sfe_widths", s.sfe_widths},
       {"resnet_widths", s.resnet_widths}, {"stem_kernel", s.stem_kernel},   {"num_classes", s.num_classes},
       {"unet_widths", s.unet_widths},    {"zero_init_output", s.zero_init_output}};
}

void from_json(const nlohmann::json& j, ModelSpec& s) {
  s.kind = model_kind_from_string(j.at("kind").get<std::string>());
  s.channels = j.value("channels", 1);
  s.length = j.value("length", 8);
  s.height = j.at("height").get<int>();
  s.width = j.at("width").get<int>();
  s.sfe_widths = j.value("sfe_widths", std::vector<int>{16, 32});
  s.resnet_widths = j.value("resnet_widths", std::vector<int>{64, 128, 256});
  s.stem_kernel = j.value("stem_kernel", 7);
  s.num_classes = j.value("num_classes", 9);
  s.unet_widths = j.value("unet_widths", std::vector<int>{32, 64, 128, 256});
  s.zero_init_output = j.value("zero_init_output", false);
}

std::string format_shape(const Shape& s) { return nn::shape_string(s, "×"); }

std::string format_table(const std::vector<LayerRow>& rows) {
  std::size_t wl = 5, wo = 9, wi = 5;
  std::vector<std::string> ins;
  for (const auto& r : rows) {
    std::string in;
    for (std::size_t i = 0; i < r.inputs.size(); ++i) in += (i ? " " : "") + format_shape(r.inputs[i]);
    ins.push_back(in);
    wl = std::max(wl, r.layer.size());
    wo = std::max(wo, r.op.size());
    wi = std::max(wi, in.size());
  }
  std::string out = fmt::format("{:<{}}  {:<{}}  {:<{}}  {}\n", "Layer", wl, "Operation", wo, "Input", wi, "Output");
  for (std::size_t i = 0; i < rows.size(); ++i)
    out += fmt::format("{:<{}}  {:<{}}  {:<{}}  {}\n", rows[i].layer, wl, rows[i].op, wo, ins[i], wi,
                       format_shape(rows[i].output));
  return out;
}

namespace {

constexpr Triple k3x3{1, 3, 3};
constexpr Triple same3x3{0, 1, 1};
constexpr Triple unit{1, 1, 1};

std::unique_ptr<Sequential> double_conv(const std::string& name, int in, int out, Rng& rng) {
  auto s = std::make_unique<Sequential>();
  s->add(nn::conv_bn_relu(name + ".0", in, out, k3x3, unit, same3x3, rng));
  s->add(nn::conv_bn_relu(name + ".1", out, out, k3x3, unit, same3x3, rng));
  return s;
}

Shape drop_batch(const Shape& s) { return Shape(s.begin() + 1, s.end()); }
// (C, 1, H, W) -> (C, H, W) for frame tables.
Shape frame_shape(const Shape& s) { return {s[1], s[3], s[4]}; }

}  // namespace

// --- EncoderDecoder -----------------------------------------------------------

EncoderDecoder::EncoderDecoder(const std::string& prefix, std::vector<int> widths, bool zero_init_output, Rng& rng)
    : widths_(std::move(widths)) {
  if (widths_.size() < 2) throw Error("encoder-decoder needs at least one pooling level");
  const int depth = this->depth();
  input_ = nn::conv_bn_relu(prefix + ".input", 1, widths_[0], k3x3, unit, same3x3, rng);
  enc_.push_back(double_conv(prefix + ".enc0", widths_[0], widths_[0], rng));
  for (int l = 1; l <= depth; ++l) {
    pool_.push_back(std::make_unique<nn::MaxPool3d>(Triple{1, 2, 2}, Triple{1, 2, 2}, Triple{0, 0, 0}));
    enc_.push_back(double_conv(fmt::format("{}.enc{}", prefix, l), widths_[l - 1], widths_[l], rng));
  }
  up_.resize(static_cast<std::size_t>(depth));
  up_conv_.resize(static_cast<std::size_t>(depth));
  dec_.resize(static_cast<std::size_t>(depth));
  for (int l = depth - 1; l >= 0; --l) {
    up_[l] = std::make_unique<nn::Upsample2x>();
    up_conv_[l] = nn::conv_bn_relu(fmt::format("{}.up{}", prefix, l), widths_[l + 1], widths_[l], k3x3, unit,
                                   same3x3, rng);
    dec_[l] = double_conv(fmt::format("{}.dec{}", prefix, l), 2 * widths_[l], widths_[l], rng);
  }
  output_ = std::make_unique<Conv3d>(prefix + ".output", widths_[0], 1, k3x3, unit, same3x3, true, rng);
  if (zero_init_output) output_->zero_parameters();
}

Shape EncoderDecoder::output_shape(const Shape& in) const {
  if (in.size() != 5 || in[1] != 1 || in[2] != 1) throw Error("encoder-decoder expects (N, 1, 1, H, W) frames");
  const int f = 1 << depth();
  if (in[3] % f || in[4] % f)
    throw Error(fmt::format("encoder-decoder: frame {}x{} not divisible by {}", in[3], in[4], f));
  return in;
}

Tensor EncoderDecoder::forward(const Tensor& x, bool training) {
  output_shape(x.shape());
  const int depth = this->depth();
  std::vector<Tensor> skips(static_cast<std::size_t>(depth));
  Tensor h = enc_[0]->forward(input_->forward(x, training), training);
  for (int l = 1; l <= depth; ++l) {
    skips[l - 1] = h;
    h = enc_[l]->forward(pool_[l - 1]->forward(h, training), training);
  }
  bottleneck_ = h;
  for (int l = depth - 1; l >= 0; --l) {
    Tensor u = up_conv_[l]->forward(up_[l]->forward(h, training), training);
    h = dec_[l]->forward(nn::concat_channels(u, skips[l]), training);
  }
  return output_->forward(h, training);
}

Tensor EncoderDecoder::backward(const Tensor& grad_out) {
  const int depth = this->depth();
  std::vector<Tensor> skip_grads(static_cast<std::size_t>(depth));
  Tensor g = output_->backward(grad_out);
  for (int l = 0; l < depth; ++l) {
    auto [g_up, g_skip] = nn::split_channels(dec_[l]->backward(g), widths_[l]);
    skip_grads[l] = std::move(g_skip);
    g = up_[l]->backward(up_conv_[l]->backward(g_up));
  }
  for (int l = depth; l >= 1; --l) {
    g = pool_[l - 1]->backward(enc_[l]->backward(g));
    g += skip_grads[l - 1];
  }
  return input_->backward(enc_[0]->backward(g));
}

void EncoderDecoder::collect(std::vector<nn::Parameter*>& p, std::vector<nn::Buffer*>& b) {
  input_->collect(p, b);
  for (auto& e : enc_) e->collect(p, b);
  for (int l = depth() - 1; l >= 0; --l) {
    up_conv_[l]->collect(p, b);
    dec_[l]->collect(p, b);
  }
  output_->collect(p, b);
}

std::vector<LayerRow> EncoderDecoder::describe(int height, int width) const {
  std::vector<LayerRow> rows;
  Shape s{1, 1, 1, height, width};
  output_shape(s);
  auto add = [&](std::string layer, std::string op, std::vector<Shape> in, const Shape& out) {
    std::vector<Shape> fin;
    for (auto& i : in) fin.push_back(frame_shape(i));
    rows.push_back({std::move(layer), std::move(op), std::move(fin), frame_shape(out)});
  };
  const int depth = this->depth();
  Shape h = input_->output_shape(s);
  add("Input layer", fmt::format("Conv3×3, {}, stride 1, BN, ReLU", widths_[0]), {s}, h);
  std::vector<Shape> skips;
  Shape next = enc_[0]->output_shape(h);
  add("2×StackEncoder", fmt::format("Conv3×3, {}, stride 1, BN, ReLU", widths_[0]), {h}, next);
  h = next;
  for (int l = 1; l <= depth; ++l) {
    skips.push_back(h);
    next = pool_[l - 1]->output_shape(h);
    add("Maxpooling layer", "Maxpool 2×2", {h}, next);
    h = next;
    next = enc_[l]->output_shape(h);
    add("2×StackEncoder", fmt::format("Conv3×3, {}, stride 1, BN, ReLU", widths_[l]), {h}, next);
    h = next;
  }
  for (int l = depth - 1; l >= 0; --l) {
    next = up_conv_[l]->output_shape(up_[l]->output_shape(h));
    add("Upsampling layer", fmt::format("Upsample 2×2, Conv3×3, {}, stride 1, BN, ReLU", widths_[l]), {h}, next);
    Shape cat = next;
    cat[1] += skips[l][1];
    add("Concat", "Concatenate", {next, skips[l]}, cat);
    h = dec_[l]->output_shape(cat);
    add("2×StackDecoder", fmt::format("Conv3×3, {}, stride 1, BN, ReLU", widths_[l]), {cat}, h);
  }
  add("Output layer", "Conv3×3, 1, stride 1", {h}, output_->output_shape(h));
  return rows;
}

// --- ResidualUnit ---------------------------------------------------------------

ResidualUnit::ResidualUnit(const std::string& prefix, int in, int out, int stride, Rng& rng) {
  const Triple st{stride, stride, stride};
  main_.add(nn::conv_bn_relu(prefix + ".a", in, out, {3, 3, 3}, st, unit, rng));
  main_.emplace<Conv3d>(prefix + ".b.conv", out, out, Triple{3, 3, 3}, unit, unit, false, rng);
  main_.emplace<nn::BatchNorm>(prefix + ".b.bn", out);
  if (in != out || stride != 1) {
    shortcut_ = std::make_unique<Sequential>();
    shortcut_->emplace<Conv3d>(prefix + ".shortcut.conv", in, out, unit, st, Triple{0, 0, 0}, false, rng);
    shortcut_->emplace<nn::BatchNorm>(prefix + ".shortcut.bn", out);
  }
}

Shape ResidualUnit::output_shape(const Shape& in) const {
  Shape s = main_.output_shape(in);
  if (shortcut_ && shortcut_->output_shape(in) != s) throw Error("residual: shortcut shape mismatch");
  if (!shortcut_ && s != in) throw Error("residual: identity shortcut shape mismatch");
  return s;
}

Tensor ResidualUnit::forward(const Tensor& x, bool training) {
  Tensor y = main_.forward(x, training);
  y += shortcut_ ? shortcut_->forward(x, training) : x;
  return relu_.forward(y, training);
}

Tensor ResidualUnit::backward(const Tensor& grad_out) {
  Tensor g = relu_.backward(grad_out);
  Tensor dx = main_.backward(g);
  dx += shortcut_ ? shortcut_->backward(g) : g;
  return dx;
}

void ResidualUnit::collect(std::vector<nn::Parameter*>& p, std::vector<nn::Buffer*>& b) {
  main_.collect(p, b);
  if (shortcut_) shortcut_->collect(p, b);
}

// --- ResNet3d -------------------------------------------------------------------

ResNet3d::ResNet3d(const std::string& prefix, const ModelSpec& spec, Rng& rng)
    : length_(spec.length), stem_kernel_(spec.stem_kernel), pool_(Triple{3, 3, 3}, Triple{2, 2, 2}, Triple{1, 1, 1}) {
  const int k = spec.stem_kernel;
  const auto& w = spec.resnet_widths;
  stem_ = nn::conv_bn_relu(prefix + ".conv1", spec.channels, w[0], {k, k, k}, {1, 2, 2}, {k / 2, k / 2, k / 2}, rng);
  stages_.push_back(std::make_unique<ResidualUnit>(prefix + ".layer1", w[0], w[0], 1, rng));
  stages_.push_back(std::make_unique<ResidualUnit>(prefix + ".layer2", w[0], w[1], 2, rng));
  stages_.push_back(std::make_unique<ResidualUnit>(prefix + ".layer3", w[1], w[2], 2, rng));
  fc_ = std::make_unique<nn::Linear>(prefix + ".fc", w[2], spec.num_classes, rng);
}

Shape ResNet3d::output_shape(const Shape& in) const {
  if (in.size() != 5) throw Error("resnet3d expects (N, 1, L, H, W) clips");
  if (in[2] != length_) throw Error(fmt::format("resnet3d: clip length {} != {}", in[2], length_));
  Shape s = pool_.output_shape(stem_->output_shape(in));
  for (const auto& st : stages_) s = st->output_shape(s);
  return {in[0], fc_->output_shape({in[0], s[1]})[1]};
}

Tensor ResNet3d::forward(const Tensor& x, bool training) {
  output_shape(x.shape());
  stage_shapes_.clear();
  Tensor h = pool_.forward(stem_->forward(x, training), training);
  stage_shapes_.push_back(drop_batch(h.shape()));
  for (auto& st : stages_) {
    h = st->forward(h, training);
    stage_shapes_.push_back(drop_batch(h.shape()));
  }
  return fc_->forward(gap_.forward(h, training), training);
}

Tensor ResNet3d::backward(const Tensor& grad_out) {
  Tensor g = gap_.backward(fc_->backward(grad_out));
  for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) g = (*it)->backward(g);
  return stem_->backward(pool_.backward(g));
}

void ResNet3d::collect(std::vector<nn::Parameter*>& p, std::vector<nn::Buffer*>& b) {
  stem_->collect(p, b);
  for (auto& st : stages_) st->collect(p, b);
  fc_->collect(p, b);
}

std::vector<LayerRow> ResNet3d::describe(const Shape& clip) const {
  output_shape(clip);
  std::vector<LayerRow> rows;
  Shape conv1 = stem_->output_shape(clip);
  rows.push_back({"Conv1",
                  fmt::format("Conv{0}×{0}×{0}, {1}, stride (1,2,2), BN, ReLU", stem_kernel_, conv1[1]), {drop_batch(clip)},
                  drop_batch(conv1)});
  Shape pooled = pool_.output_shape(conv1);
  rows.push_back({"Maxpool", "Maxpool 3×3×3, stride 2", {drop_batch(conv1)}, drop_batch(pooled)});
  Shape h = pooled;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    Shape next = stages_[i]->output_shape(h);
    rows.push_back({fmt::format("Layer{}", i + 1),
                    fmt::format("[3×3×3, {}, stride {}; 3×3×3, {}]", next[1], i == 0 ? 1 : 2, next[1]),
                    {drop_batch(h)},
                    drop_batch(next)});
    h = next;
  }
  rows.push_back({"Avgpool", "AvgPool3d", {drop_batch(h)}, {h[1], 1, 1, 1}});
  rows.push_back({"Reshape", "View", {{h[1], 1, 1, 1}}, {h[1]}});
  const Shape logits = fc_->output_shape({1, h[1]});
  rows.push_back({"Fc", fmt::format("{}d-fc", logits[1]), {{h[1]}}, {logits[1]}});
  return rows;
}

// --- Model ----------------------------------------------------------------------

std::vector<nn::Parameter*> Model::parameters() {
  std::vector<nn::Parameter*> p;
  std::vector<nn::Buffer*> b;
  collect(p, b);
  return p;
}

std::vector<nn::Buffer*> Model::buffers() {
  std::vector<nn::Parameter*> p;
  std::vector<nn::Buffer*> b;
  collect(p, b);
  return b;
}

long Model::parameter_count() {
  long n = 0;
  for (auto* p : parameters()) n += p->value.numel();
  return n;
}

void Model::zero_grad() {
  for (auto* p : parameters()) p->grad.zero();
}

namespace {
const ModelSpec& validated(const ModelSpec& s) {
  s.validate();
  return s;
}
}  // namespace

SfeModel::SfeModel(const ModelSpec& spec, std::uint64_t seed)
    : Model(validated(spec), seed), rng_(seed), net_("sfe", spec.sfe_widths, spec.zero_init_output, rng_) {}

std::vector<LayerRow> SfeModel::describe() const {
  return net_.describe(spec().height, spec().width);
}

ResNet3dModel::ResNet3dModel(const ModelSpec& spec, std::uint64_t seed)
    : Model(validated(spec), seed), rng_(seed), net_("resnet", spec, rng_) {}

std::vector<LayerRow> ResNet3dModel::describe() const { return net_.describe(spec().input_shape()); }

Raw3dNet::Raw3dNet(const ModelSpec& spec, std::uint64_t seed)
    : Model(validated(spec), seed),
      rng_(seed),
      sfe_("sfe", spec.sfe_widths, false, rng_),
      resnet_("resnet", spec, rng_) {}

Tensor Raw3dNet::sfe_features(const Tensor& clips, bool training) {
  const Shape& s = clips.shape();
  if (s.size() != 5 || s[1] != 1) throw Error("raw3dnet expects (N, 1, L, H, W) clips");
  clip_shape_ = s;
  Tensor frames = clips.reshaped({s[0] * s[2], 1, 1, s[3], s[4]});
  return sfe_.forward(frames, training).reshaped(s);
}

Tensor Raw3dNet::forward(const Tensor& x, bool training) {
  resnet_.output_shape(x.shape());
  return resnet_.forward(sfe_features(x, training), training);
}

Tensor Raw3dNet::backward(const Tensor& g) {
  const Shape& s = clip_shape_;
  Tensor gf = resnet_.backward(g).reshaped({s[0] * s[2], 1, 1, s[3], s[4]});
  return sfe_.backward(gf).reshaped(s);
}

void Raw3dNet::collect(std::vector<nn::Parameter*>& p, std::vector<nn::Buffer*>& b) {
  sfe_.collect(p, b);
  resnet_.collect(p, b);
}

std::vector<LayerRow> Raw3dNet::describe() const {
  auto rows = sfe_.describe(spec().height, spec().width);
  for (auto& r : rows) r.layer = "SFE/" + r.layer;
  rows.push_back({"Stack", fmt::format("Stack {} frames", spec().length),
                  {{1, spec().height, spec().width}}, {1, spec().length, spec().height, spec().width}});
  for (auto& r : resnet_.describe(spec().input_shape())) {
    r.layer = "3D-ResNet/" + r.layer;
    rows.push_back(std::move(r));
  }
  return rows;
}

UNetRestorer::UNetRestorer(const ModelSpec& spec, std::uint64_t seed)
    : Model(validated(spec), seed), rng_(seed), net_("unet", spec.unet_widths, spec.zero_init_output, rng_) {}

Tensor UNetRestorer::forward(const Tensor& x, bool training) { return clamp_.forward(net_.forward(x, training), training); }
Tensor UNetRestorer::backward(const Tensor& g) { return net_.backward(clamp_.backward(g)); }

std::vector<LayerRow> UNetRestorer::describe() const {
  auto rows = net_.describe(spec().height, spec().width);
  rows.push_back({"Clamp", "Clamp to [0,1]", {rows.back().output}, rows.back().output});
  return rows;
}

std::unique_ptr<Model> build_model(const ModelSpec& spec, std::uint64_t seed) {
  switch (spec.kind) {
    case ModelKind::sfe: return std::make_unique<SfeModel>(spec, seed);
    case ModelKind::resnet3d: return std::make_unique<ResNet3dModel>(spec, seed);
    case ModelKind::raw3dnet: return std::make_unique<Raw3dNet>(spec, seed);
    case ModelKind::unet_restorer: return std::make_unique<UNetRestorer>(spec, seed);
  }
  throw Error("unknown model kind");
}

std::vector<LayerRow> describe_spec(const ModelSpec& spec) { return build_model(spec, 0)->describe(); }

}  // namespace lgr::models
