#include "lgr/checkpoint.hpp"
#include "lgr/error.hpp"
#include "lgr/models.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

using namespace lgr;
using namespace lgr::models;
using lgr::nn::Shape;
using lgr::nn::Tensor;

namespace {

Tensor random_tensor(const Shape& shape, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Tensor t(shape);
  Rng rng(seed);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

const LayerRow& row(const std::vector<LayerRow>& rows, const std::string& name, int occurrence = 0) {
  for (const auto& r : rows)
    if (r.layer == name && occurrence-- == 0) return r;
  throw std::runtime_error("no row " + name);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (long i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(Sfe, DefaultShapeTable) {
  const auto rows = describe_spec(ModelSpec::defaults(ModelKind::sfe));
  EXPECT_EQ(row(rows, "Input layer").output, (Shape{16, 240, 320}));
  EXPECT_EQ(row(rows, "2×StackEncoder", 0).output, (Shape{16, 240, 320}));
  EXPECT_EQ(row(rows, "Maxpooling layer").output, (Shape{16, 120, 160}));
  EXPECT_EQ(row(rows, "2×StackEncoder", 1).output, (Shape{32, 120, 160}));
  EXPECT_EQ(row(rows, "Upsampling layer").output, (Shape{16, 240, 320}));
  EXPECT_EQ(row(rows, "Concat").output, (Shape{32, 240, 320}));
  EXPECT_EQ(row(rows, "2×StackDecoder").output, (Shape{16, 240, 320}));
  EXPECT_EQ(row(rows, "Output layer").output, (Shape{1, 240, 320}));
}

TEST(Sfe, PreservesResolutionForEvenGeometry) {
  for (auto [h, w] : {std::pair{24, 32}, std::pair{10, 14}, std::pair{48, 64}}) {
    auto spec = ModelSpec::reduced(ModelKind::sfe, h, w);
    auto model = build_model(spec, 1);
    const Tensor out = model->forward(random_tensor({2, 1, 1, h, w}, 3), false);
    EXPECT_EQ(out.shape(), (Shape{2, 1, 1, h, w}));
    EXPECT_TRUE(out.all_finite());
  }
  auto odd = ModelSpec::reduced(ModelKind::sfe, 25, 32);
  EXPECT_THROW(odd.validate(), Error);
}

TEST(Sfe, ForwardAtDefaultGeometry) {
  auto model = build_model(ModelSpec::defaults(ModelKind::sfe), 2);
  const Tensor out = model->forward(random_tensor({1, 1, 1, 240, 320}, 4), false);
  EXPECT_EQ(out.shape(), (Shape{1, 1, 1, 240, 320}));
  auto& sfe = dynamic_cast<SfeModel&>(*model);
  EXPECT_EQ(sfe.net().bottleneck().shape(), (Shape{1, 32, 1, 120, 160}));
}

TEST(ResNet3d, DefaultShapeTable) {
  const auto rows = describe_spec(ModelSpec::defaults(ModelKind::resnet3d));
  EXPECT_EQ(row(rows, "Conv1").output, (Shape{64, 8, 120, 160}));
  EXPECT_EQ(row(rows, "Maxpool").output, (Shape{64, 4, 60, 80}));
  EXPECT_EQ(row(rows, "Layer1").output, (Shape{64, 4, 60, 80}));
  EXPECT_EQ(row(rows, "Layer2").output, (Shape{128, 2, 30, 40}));
  EXPECT_EQ(row(rows, "Layer3").output, (Shape{256, 1, 15, 20}));
  EXPECT_EQ(row(rows, "Fc").output, (Shape{9}));
}

TEST(ResNet3d, ForwardAtDefaultGeometryRecordsStageShapes) {
  ModelSpec spec = ModelSpec::defaults(ModelKind::resnet3d);
  ResNet3dModel model(spec, 3);
  const Tensor logits = model.forward(random_tensor({1, 1, 8, 240, 320}, 5), false);
  EXPECT_EQ(logits.shape(), (Shape{1, 9}));
  EXPECT_TRUE(logits.all_finite());
  const auto& st = model.net().stage_shapes();
  ASSERT_EQ(st.size(), 4u);
  EXPECT_EQ(st[1], (Shape{64, 4, 60, 80}));
  EXPECT_EQ(st[2], (Shape{128, 2, 30, 40}));
  EXPECT_EQ(st[3], (Shape{256, 1, 15, 20}));
}

TEST(ResNet3d, DeskScaleStagesAndBatch) {
  ModelSpec spec = ModelSpec::defaults(ModelKind::resnet3d);
  spec.height = 48;
  spec.width = 64;
  ResNet3dModel model(spec, 4);
  const Tensor logits = model.forward(random_tensor({2, 1, 8, 48, 64}, 6), false);
  EXPECT_EQ(logits.shape(), (Shape{2, 9}));
  const auto& st = model.net().stage_shapes();
  EXPECT_EQ(st[1], (Shape{64, 4, 12, 16}));
  EXPECT_EQ(st[2], (Shape{128, 2, 6, 8}));
  EXPECT_EQ(st[3], (Shape{256, 1, 3, 4}));
}

TEST(ResNet3d, RejectsWrongClipLength) {
  auto model = build_model(ModelSpec::reduced(ModelKind::resnet3d, 24, 32), 1);
  EXPECT_THROW(model->forward(random_tensor({1, 1, 7, 24, 32}, 1), false), Error);
}

TEST(Raw3dNet, EqualsManualComposition) {
  auto spec = ModelSpec::reduced(ModelKind::raw3dnet, 24, 32);
  Raw3dNet net(spec, 9);
  const Tensor clip = random_tensor({2, 1, 8, 24, 32}, 10);
  const Tensor direct = net.forward(clip, false);
  // Manual: SFE per frame, stacked, then the 3D-ResNet.
  Tensor stacked({2, 1, 8, 24, 32});
  for (int n = 0; n < 2; ++n)
    for (int t = 0; t < 8; ++t) {
      Tensor frame({1, 1, 1, 24, 32});
      const long off = (static_cast<long>(n) * 8 + t) * 24 * 32;
      std::copy(clip.data() + off, clip.data() + off + 24 * 32, frame.data());
      const Tensor f = net.sfe().forward(frame, false);
      std::copy(f.data(), f.data() + 24 * 32, stacked.data() + off);
    }
  const Tensor manual = net.resnet().forward(stacked, false);
  EXPECT_LT(max_abs_diff(direct, manual), 1e-12);
}

TEST(Raw3dNet, SharedSfeWeightsTouchEveryFrame) {
  auto spec = ModelSpec::reduced(ModelKind::raw3dnet, 24, 32);
  Raw3dNet net(spec, 11);
  const Tensor clip = random_tensor({1, 1, 8, 24, 32}, 12);
  const Tensor before = net.sfe_features(clip, false);
  for (auto* p : net.parameters())
    if (p->name.rfind("sfe.", 0) == 0 && p->name.find("weight") != std::string::npos) {
      for (double& v : p->value.values()) v *= 1.05;
      break;
    }
  const Tensor after = net.sfe_features(clip, false);
  const long frame = 24 * 32;
  for (int t = 0; t < 8; ++t) {
    double diff = 0.0;
    for (long i = t * frame; i < (t + 1) * frame; ++i) diff = std::max(diff, std::abs(after[i] - before[i]));
    EXPECT_GT(diff, 0.0) << "frame " << t;
  }
}

TEST(Raw3dNet, GradientMatchesCentralDifferences) {
  auto spec = ModelSpec::reduced(ModelKind::raw3dnet, 24, 32);
  Raw3dNet net(spec, 13);
  const Tensor clip = random_tensor({1, 1, 8, 24, 32}, 14);
  const std::vector<int> labels{4};
  auto loss_at = [&]() { return nn::cross_entropy(net.forward(clip, true), labels); };

  net.zero_grad();
  Tensor g;
  nn::cross_entropy(net.forward(clip, true), labels, &g);
  net.backward(g);

  auto params = net.parameters();
  long total = 0;
  for (auto* p : params) total += p->value.numel();
  Rng rng(15);
  // Steps of 1e-5 and above cross ReLU and max-pool switching points.
  const double h = 1e-6;
  double worst = 0.0;
  int checked = 0;
  while (checked < 50) {
    // Sample a parameter element uniformly over the whole parameter vector.
    long k = static_cast<long>(rng.uniform_index(static_cast<std::uint64_t>(total)));
    nn::Parameter* p = nullptr;
    for (auto* q : params) {
      if (k < q->value.numel()) {
        p = q;
        break;
      }
      k -= q->value.numel();
    }
    const double analytic = p->grad[k];
    const double saved = p->value[k];
    p->value[k] = saved + h;
    const double up = loss_at();
    p->value[k] = saved - h;
    const double down = loss_at();
    p->value[k] = saved;
    const double numeric = (up - down) / (2 * h);
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-7});
    const double rel = std::abs(analytic - numeric) / scale;
    worst = std::max(worst, rel);
    EXPECT_LE(rel, 1e-3) << p->name << "[" << k << "] analytic " << analytic << " numeric " << numeric;
    ++checked;
  }
  std::printf("max relative gradient error over %d parameters: %.3g\n", checked, worst);
}

TEST(Models, DeterministicInitialization) {
  for (ModelKind kind : {ModelKind::sfe, ModelKind::resnet3d, ModelKind::raw3dnet, ModelKind::unet_restorer}) {
    auto spec = ModelSpec::reduced(kind, 24, 32);
    const Shape in = spec.input_shape(1);
    const Tensor x = random_tensor(in, 16);
    auto a = build_model(spec, 21), b = build_model(spec, 21), c = build_model(spec, 22);
    EXPECT_EQ(a->parameter_count(), b->parameter_count());
    const Tensor ya = a->forward(x, false), yb = b->forward(x, false), yc = c->forward(x, false);
    EXPECT_EQ(ya.storage(), yb.storage()) << to_string(kind);
    EXPECT_NE(ya.storage(), yc.storage()) << to_string(kind);
    auto pa = a->parameters(), pb = b->parameters();
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
      EXPECT_EQ(pa[i]->name, pb[i]->name);
      EXPECT_EQ(pa[i]->value.shape(), pb[i]->value.shape());
    }
  }
}

TEST(Models, BatchNormScaleAndShiftInit) {
  auto model = build_model(ModelSpec::reduced(ModelKind::resnet3d, 24, 32), 3);
  int bn = 0;
  for (auto* p : model->parameters()) {
    if (p->decay) continue;
    ++bn;
    const bool gamma = p->name.find("gamma") != std::string::npos;
    for (double v : p->value.values()) EXPECT_EQ(v, gamma ? 1.0 : 0.0) << p->name;
  }
  EXPECT_GT(bn, 0);
}

TEST(Logits, ArgmaxLowestIndexAndShiftInvariant) {
  Tensor logits({3, 9}, 0.0);
  logits[2] = 1.0;
  logits[5] = 1.0;
  for (int k = 0; k < 9; ++k) logits[9 + k] = -1.0;
  for (int k = 0; k < 9; ++k) logits[18 + k] = 0.1 * k;
  EXPECT_EQ(nn::argmax_row(logits, 0), 2);
  EXPECT_EQ(nn::argmax_row(logits, 1), 0);
  EXPECT_EQ(nn::argmax_row(logits, 2), 8);
  Tensor shifted = logits;
  for (double& v : shifted.values()) v += 17.25;
  for (int r = 0; r < 3; ++r) EXPECT_EQ(nn::argmax_row(shifted, r), nn::argmax_row(logits, r));
}

TEST(Logits, UniformCrossEntropyIsLogNine) {
  const Tensor logits({4, 9}, 0.3);
  EXPECT_NEAR(nn::cross_entropy(logits, {0, 3, 5, 8}), std::log(9.0), 1e-12);
  EXPECT_NEAR(std::log(9.0), 2.1972, 1e-4);
}

TEST(UNet, ShapeRangeAtDefaultGeometry) {
  auto model = build_model(ModelSpec::defaults(ModelKind::unet_restorer), 5);
  const Tensor out = model->forward(random_tensor({1, 1, 1, 240, 320}, 6, 0.0, 3.0), false);
  EXPECT_EQ(out.shape(), (Shape{1, 1, 1, 240, 320}));
  for (double v : out.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(model->describe().back().layer, "Clamp");
}

TEST(UNet, ZeroInputWithZeroOutputLayerIsConstant) {
  auto spec = ModelSpec::reduced(ModelKind::unet_restorer, 32, 48);
  spec.zero_init_output = true;
  auto model = build_model(spec, 7);
  const Tensor out = model->forward(Tensor({2, 1, 1, 32, 48}), false);
  for (double v : out.values()) EXPECT_EQ(v, out[0]);
  auto bad = ModelSpec::reduced(ModelKind::unet_restorer, 36, 48);
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Checkpoint, RoundTripReproducesOutputs) {
  auto spec = ModelSpec::reduced(ModelKind::raw3dnet, 24, 32);
  auto model = build_model(spec, 31);
  const Tensor clip = random_tensor({2, 1, 8, 24, 32}, 32);
  model->forward(clip, true);  // moves batch-norm running statistics
  Checkpoint ckpt = Checkpoint::capture(*model);
  ckpt.best_val_accuracy = 0.625;
  ckpt.train_config_digest = "abc123";
  ckpt.metadata["note"] = "unit";
  const auto path = std::filesystem::temp_directory_path() / "lgr_models_ckpt.bin";
  save_checkpoint(path, ckpt);
  const Checkpoint back = load_checkpoint(path);
  EXPECT_EQ(back.spec, spec);
  EXPECT_EQ(back.seed, 31u);
  EXPECT_EQ(back.best_val_accuracy, 0.625);
  EXPECT_EQ(back.train_config_digest, "abc123");
  EXPECT_EQ(back.metadata.at("note"), "unit");
  auto restored = back.instantiate();
  EXPECT_EQ(restored->forward(clip, false).storage(), model->forward(clip, false).storage());

  auto other = build_model(ModelSpec::reduced(ModelKind::resnet3d, 24, 32), 1);
  EXPECT_THROW(back.restore_into(*other), Error);
  std::filesystem::resize_file(path, 100);
  EXPECT_THROW(load_checkpoint(path), Error);
}

TEST(Spec, JsonRoundTripAndValidation) {
  const auto spec = ModelSpec::reduced(ModelKind::raw3dnet, 48, 64);
  const nlohmann::json j = spec;
  EXPECT_EQ(j.get<ModelSpec>(), spec);
  EXPECT_EQ(model_kind_from_string("unet_restorer"), ModelKind::unet_restorer);
  EXPECT_THROW(model_kind_from_string("lstm"), Error);
  auto small = ModelSpec::reduced(ModelKind::resnet3d, 8, 8);
  EXPECT_THROW(small.validate(), Error);
  EXPECT_EQ(spec.input_shape(3), (Shape{3, 1, 8, 48, 64}));
}
