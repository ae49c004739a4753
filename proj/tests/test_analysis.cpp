#include "lgr/analysis.hpp"

#include "lgr/dataset.hpp"
#include "lgr/error.hpp"
#include "lgr/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace lgr;
using namespace lgr::analysis;

namespace {

Vector basis(int dim, int k, double scale = 1.0) {
  Vector v(static_cast<std::size_t>(dim), 0.0);
  v[static_cast<std::size_t>(k)] = scale;
  return v;
}

// n images per class, each a unit direction e_k plus small isotropic noise.
EmbeddingsByClass separable_fixture(int classes, int n, int dim, std::uint64_t seed) {
  Rng rng(seed);
  EmbeddingsByClass out;
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < n; ++i) {
      Vector v = basis(dim, c);
      for (double& x : v) x += 0.05 * rng.normal();
      out[c].push_back(v);
    }
  return out;
}

EmbeddingsByClass random_fixture(int classes, int n, int dim, std::uint64_t seed) {
  Rng rng(seed);
  EmbeddingsByClass out;
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < n; ++i) {
      Vector v(static_cast<std::size_t>(dim));
      for (double& x : v) x = rng.normal();
      out[c].push_back(v);
    }
  return out;
}

// Cell scan written against explicit (shape, motion) tuples.
ErrorAttribution brute_force_attribution(const std::vector<std::vector<long>>& m) {
  struct Factor { int shape, motion; };
  std::vector<Factor> f;
  for (int s = 0; s < 3; ++s)
    for (int mo = 0; mo < 3; ++mo) f.push_back({s, mo});
  ErrorAttribution out;
  for (std::size_t t = 0; t < 9; ++t)
    for (std::size_t p = 0; p < 9; ++p) {
      if (t == p) continue;
      const bool ds = f[t].shape != f[p].shape, dm = f[t].motion != f[p].motion;
      if (ds && !dm) out.shape += m[t][p];
      if (!ds && dm) out.motion += m[t][p];
      if (ds && dm) out.both += m[t][p];
    }
  return out;
}

}  // namespace

TEST(Cosine, ClosedForms) {
  const Vector v{0.3, -1.2, 4.0, 0.0};
  EXPECT_NEAR(cosine_similarity(v, v), 1.0, 1e-15);
  EXPECT_EQ(cosine_similarity(basis(512, 0), basis(512, 1)), 0.0);
  Vector a = basis(512, 0);
  a[1] = 1.0;
  EXPECT_NEAR(cosine_similarity(a, basis(512, 0)), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(cosine_similarity(v, Vector{-0.3, 1.2, -4.0, 0.0}), -1.0, 1e-15);
  EXPECT_THROW(cosine_similarity(Vector(4, 0.0), v), Error);
  EXPECT_THROW(cosine_similarity(v, Vector{1.0, 2.0}), Error);
}

TEST(Pertinence, SeparableFixtureIsDiagonal) {
  const int n = 40;
  const auto emb = separable_fixture(3, n, 512, 4);
  for (int c = 0; c < 3; ++c) {
    const PertinenceRow row = pertinence_counts(emb, c, {0, 1, 2});
    for (int k = 0; k < 3; ++k) EXPECT_EQ(row.counts[static_cast<std::size_t>(k)], k == c ? n : 0);
    EXPECT_EQ(row.total(), n);
  }
  const auto sim = class_similarity_matrix(emb);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      if (i != j) {
        EXPECT_GT(sim[i][i], sim[i][j]);
      }
}

TEST(Pertinence, CountsSumToClassSizeAndAreScaleInvariant) {
  Rng scale_rng(8);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto emb = random_fixture(4, 5 + static_cast<int>(seed % 4), 16, seed);
    EmbeddingsByClass scaled = emb;
    for (auto& [c, set] : scaled)
      for (auto& v : set) {
        const double k = scale_rng.uniform(0.01, 100.0);
        for (double& x : v) x *= k;
      }
    for (int c = 0; c < 4; ++c) {
      const PertinenceRow a = pertinence_counts(emb, c, {0, 1, 2, 3});
      const PertinenceRow b = pertinence_counts(scaled, c, {0, 1, 2, 3});
      EXPECT_EQ(a.total(), static_cast<long>(emb.at(c).size()));
      EXPECT_EQ(a.counts, b.counts);
      for (long x : a.counts) EXPECT_GE(x, 0);
    }
  }
}

TEST(Pertinence, LeavesTheQueryOutOfItsOwnClass) {
  // Query (1,0) against own class {(1,0),(0,1)} and class 1 {(0.4, sqrt(0.84))}.
  // Leave-one-out intra mean is 0 < 0.4; including the query would give 0.5.
  EmbeddingsByClass emb;
  emb[0] = {{1.0, 0.0}, {0.0, 1.0}};
  emb[1] = {{0.4, std::sqrt(0.84)}};
  const PertinenceRow row = pertinence_counts(emb, 0, {0, 1});
  // (0,1) scores 0 against its class mate and sqrt(0.84) against class 1.
  EXPECT_EQ(row.counts, (std::vector<long>{0, 2}));
}

TEST(Pertinence, TiesGoToLowestClassIndex) {
  EmbeddingsByClass emb;
  emb[0] = {{1.0, 0.0}, {1.0, 0.0}};
  emb[3] = {{1.0, 0.0}};
  emb[5] = {{2.0, 0.0}, {0.5, 0.0}};
  const PertinenceRow row = pertinence_counts(emb, 5, {5, 3, 0});
  ASSERT_EQ(row.candidates, (std::vector<int>{0, 3, 5}));
  EXPECT_EQ(row.counts, (std::vector<long>{2, 0, 0}));
  const PertinenceRow own = pertinence_counts(emb, 0, {3, 0});
  EXPECT_EQ(own.counts, (std::vector<long>{2, 0}));
}

TEST(Pertinence, Errors) {
  EmbeddingsByClass emb;
  emb[0] = {{1.0, 0.0}};
  emb[1] = {{0.0, 1.0}, {1.0, 1.0}};
  EXPECT_THROW(pertinence_counts(emb, 0, {0, 1}), Error);  // leave-one-out impossible
  EXPECT_NO_THROW(pertinence_counts(emb, 0, {1}));
  EXPECT_THROW(pertinence_counts(emb, 1, {1, 2}), Error);  // missing candidate
  EXPECT_THROW(pertinence_counts(emb, 4, {0, 1}), Error);  // missing evaluated class
  EXPECT_THROW(pertinence_counts(emb, 1, {}), Error);
  EXPECT_THROW(pertinence_counts(emb, 1, {0, 0}), Error);
  emb[1].push_back({0.0, 0.0});
  EXPECT_THROW(pertinence_counts(emb, 1, {0, 1}), Error);  // zero vector
}

TEST(Pertinence, ImagesThroughFileBackend) {
  std::map<std::string, Vector> table;
  std::vector<AnalysisImage> images;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 4; ++i) {
      const std::string id = dataset::class_dir_name(c) + "/seq" + std::to_string(i);
      Vector v = basis(8, c);
      v[7] = 0.1 * i;
      table[id] = v;
      images.push_back({id, c, Plane()});
    }
  const FileEmbeddingBackend backend(table);
  EXPECT_EQ(backend.dim(), 8);
  const PertinenceRow row = pertinence_counts(images, 1, {0, 1, 2}, backend);
  EXPECT_EQ(row.counts, (std::vector<long>{0, 4, 0}));
  EXPECT_THROW(backend.embed({"unknown", 0, Plane()}), Error);
}

TEST(EmbeddingFiles, CsvAndJsonRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "lgr_embeddings";
  std::filesystem::create_directories(dir);
  const std::map<std::string, Vector> table{{"a/0", {0.1, -2.5, 1e-9}}, {"b/1", {3.0, 0.0, 7.25}}};
  for (const char* name : {"e.csv", "e.json"}) {
    save_embeddings(dir / name, table);
    EXPECT_EQ(load_embeddings(dir / name), table) << name;
  }
  {
    std::ofstream out(dir / "header.csv");
    out << "id,f0,f1\nx,1,2\ny,3,4\n";
  }
  const auto h = load_embeddings(dir / "header.csv");
  EXPECT_EQ(h.size(), 2u);
  EXPECT_EQ(h.at("y"), (Vector{3.0, 4.0}));
  {
    std::ofstream out(dir / "ragged.csv");
    out << "x,1,2\ny,3\n";
  }
  EXPECT_THROW(load_embeddings(dir / "ragged.csv"), Error);
  {
    std::ofstream out(dir / "bad.csv");
    out << "x,1,2\ny,3,z\n";
  }
  EXPECT_THROW(load_embeddings(dir / "bad.csv"), Error);
  EXPECT_THROW(load_embeddings(dir / "missing.csv"), Error);
  EXPECT_THROW(load_embeddings(dir / "e.txt"), Error);
}

TEST(EmbeddingBackend, CheckpointBottleneckFeatures) {
  using models::ModelKind;
  using models::ModelSpec;
  EXPECT_EQ(ModelSpec::defaults(ModelKind::sfe).sfe_widths.back() * 16, 512);

  const ModelSpec spec = ModelSpec::reduced(ModelKind::sfe, 24, 32);
  auto model = models::build_model(spec, 3);
  const Checkpoint ckpt = Checkpoint::capture(*model);
  const CheckpointEmbeddingBackend backend(ckpt);
  EXPECT_EQ(backend.dim(), spec.sfe_widths.back() * 16);

  const Plane frame = dataset::render_gesture_frame(4, 2, 0, 8, {24, 32}, 9);
  const Vector a = backend.embed({"x", 4, frame});
  const Vector b = backend.embed({"x", 4, frame});
  ASSERT_EQ(static_cast<int>(a.size()), backend.dim());
  EXPECT_EQ(a, b);
  // Frames at another size are resized to the model geometry first.
  const Plane big = resize_bilinear(frame, {48, 64});
  EXPECT_EQ(backend.embed({"y", 4, big}), backend.embed({"y", 4, resize_bilinear(big, {24, 32})}));

  auto resnet = models::build_model(ModelSpec::reduced(ModelKind::resnet3d, 24, 32), 1);
  EXPECT_THROW(CheckpointEmbeddingBackend(Checkpoint::capture(*resnet)), Error);
  EXPECT_THROW(CheckpointEmbeddingBackend(ckpt, 0), Error);
}

TEST(ErrorAttribution, ClosedFormCases) {
  std::vector<std::vector<long>> m(9, std::vector<long>(9, 0));
  for (int i = 0; i < 9; ++i) m[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = 20;
  EXPECT_EQ(error_attribution(m), (ErrorAttribution{0, 0, 0}));
  m[1][4] = 1;  // same motion, different shape
  EXPECT_EQ(error_attribution(m), (ErrorAttribution{1, 0, 0}));
  m[1][4] = 0;
  m[0][2] = 3;  // same shape, different motion
  m[0][8] = 2;  // both differ
  EXPECT_EQ(error_attribution(m), (ErrorAttribution{0, 3, 2}));
}

TEST(ErrorAttribution, MatchesExhaustiveOracleOnRandomMatrices) {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<long>> m(9, std::vector<long>(9));
    long off = 0;
    for (std::size_t t = 0; t < 9; ++t)
      for (std::size_t p = 0; p < 9; ++p) {
        m[t][p] = static_cast<long>(rng.uniform_index(50));
        if (t != p) off += m[t][p];
      }
    const ErrorAttribution got = error_attribution(m);
    EXPECT_EQ(got, brute_force_attribution(m));
    EXPECT_EQ(got.total(), off);
    std::array<std::array<long, 9>, 9> arr{};
    for (std::size_t t = 0; t < 9; ++t)
      for (std::size_t p = 0; p < 9; ++p) arr[t][p] = m[t][p];
    EXPECT_EQ(error_attribution(arr), got);
  }
}

TEST(ErrorAttribution, RejectsMalformedMatrices) {
  EXPECT_THROW(error_attribution(std::vector<std::vector<long>>(8, std::vector<long>(9, 0))), Error);
  EXPECT_THROW(error_attribution(std::vector<std::vector<long>>(9, std::vector<long>(10, 0))), Error);
  std::vector<std::vector<long>> neg(9, std::vector<long>(9, 0));
  neg[2][3] = -1;
  EXPECT_THROW(error_attribution(neg), Error);
}

TEST(Reports, PertinenceAndConfusionCsv) {
  const auto dir = std::filesystem::temp_directory_path() / "lgr_analysis_csv";
  std::filesystem::create_directories(dir);
  PertinenceRow r{0, {0, 1, 2}, {25, 37, 10}};
  write_pertinence_csv(dir / "p.csv", {r});
  std::ifstream in(dir / "p.csv");
  std::string header, line;
  std::getline(in, header);
  std::getline(in, line);
  EXPECT_EQ(header, "evaluated_class,class_0,class_1,class_2,total");
  EXPECT_EQ(line, "0,25,37,10,72");
  std::array<std::array<long, 9>, 9> conf{};
  conf[3][3] = 5;
  write_confusion_csv(dir / "c.csv", conf);
  std::ifstream c(dir / "c.csv");
  int lines = 0;
  while (std::getline(c, line)) ++lines;
  EXPECT_EQ(lines, 10);
}
