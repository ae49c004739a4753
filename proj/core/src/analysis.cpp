#include "lgr/analysis.hpp"

#include "lgr/dataset.hpp"
#include "lgr/error.hpp"
#include "lgr/training.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>

namespace lgr::analysis {

namespace fs = std::filesystem;

double cosine_similarity(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw Error(fmt::format("cosine_similarity: dimensions differ ({} vs {})", a.size(), b.size()));
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<long double>(a[i]) * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  if (na == 0 || nb == 0) throw Error("cosine_similarity: zero vector");
  const double c = static_cast<double>(dot / (std::sqrt(na) * std::sqrt(nb)));
  return std::clamp(c, -1.0, 1.0);
}

// --- embedding files -----------------------------------------------------------

namespace {

bool parses_as_number(const std::string& s) {
  if (s.empty()) return false;
  char* end = nullptr;
  std::strtod(s.c_str(), &end);
  return end != s.c_str() && *end == '\0';
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    while (!field.empty() && field.front() == ' ') field.erase(field.begin());
    out.push_back(field);
  }
  return out;
}

}  // namespace

std::map<std::string, Vector> load_embeddings(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embedding file " + path.string());
  std::map<std::string, Vector> table;
  const std::string ext = path.extension().string();
  if (ext == ".json") {
    const auto j = nlohmann::json::parse(in);
    if (!j.is_object()) throw Error("embedding JSON must be an object of id -> array");
    for (const auto& [id, v] : j.items()) table[id] = v.get<Vector>();
  } else if (ext == ".csv") {
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line == "\r") continue;
      const auto fields = split_csv(line);
      if (fields.size() < 2) throw Error(fmt::format("{}:{}: expected id and at least one value", path.string(), lineno));
      if (lineno == 1 && !parses_as_number(fields[1])) continue;  // header
      Vector v;
      for (std::size_t i = 1; i < fields.size(); ++i) {
        if (!parses_as_number(fields[i]))
          throw Error(fmt::format("{}:{}: '{}' is not a number", path.string(), lineno, fields[i]));
        v.push_back(std::stod(fields[i]));
      }
      if (!table.emplace(fields[0], std::move(v)).second)
        throw Error(fmt::format("{}:{}: duplicate id '{}'", path.string(), lineno, fields[0]));
    }
  } else {
    throw Error("embedding file must be .csv or .json: " + path.string());
  }
  if (table.empty()) throw Error("embedding file is empty: " + path.string());
  const std::size_t d = table.begin()->second.size();
  for (const auto& [id, v] : table)
    if (v.size() != d) throw Error(fmt::format("embedding '{}' has {} values, expected {}", id, v.size(), d));
  return table;
}

void save_embeddings(const fs::path& path, const std::map<std::string, Vector>& table) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  if (path.extension() == ".json") {
    out << nlohmann::json(table).dump() << "\n";
    return;
  }
  for (const auto& [id, v] : table) {
    out << id;
    for (double x : v) out << fmt::format(",{:.17g}", x);
    out << "\n";
  }
}

FileEmbeddingBackend::FileEmbeddingBackend(std::map<std::string, Vector> table, std::string name)
    : table_(std::move(table)), name_(std::move(name)) {
  if (table_.empty()) throw Error("embedding table is empty");
  dim_ = static_cast<int>(table_.begin()->second.size());
  for (const auto& [id, v] : table_)
    if (static_cast<int>(v.size()) != dim_) throw Error("embedding '" + id + "' has the wrong dimension");
}

FileEmbeddingBackend FileEmbeddingBackend::load(const fs::path& path) {
  return FileEmbeddingBackend(load_embeddings(path), path.filename().string());
}

Vector FileEmbeddingBackend::embed(const AnalysisImage& image) const {
  const auto it = table_.find(image.id);
  if (it == table_.end()) throw Error("no embedding for image '" + image.id + "'");
  return it->second;
}

// --- checkpoint features ---------------------------------------------------------

struct CheckpointEmbeddingBackend::Impl {
  std::unique_ptr<models::Model> model;
  models::EncoderDecoder* net = nullptr;
  training::Normalizer norm;
  int grid = 4;
  int channels = 0;
  std::string name;
  // Layers cache activations, so forward passes are serialized.
  mutable std::mutex mutex;
};

CheckpointEmbeddingBackend::CheckpointEmbeddingBackend(const Checkpoint& ckpt, int grid) : impl_(new Impl) {
  if (grid < 1) throw Error("embedding grid must be >= 1");
  impl_->model = ckpt.instantiate();
  impl_->norm = training::normalizer_of(ckpt);
  impl_->grid = grid;
  const models::ModelSpec& spec = ckpt.spec;
  switch (spec.kind) {
    case models::ModelKind::sfe:
      impl_->net = &static_cast<models::SfeModel&>(*impl_->model).net();
      impl_->channels = spec.sfe_widths.back();
      break;
    case models::ModelKind::raw3dnet:
      impl_->net = &static_cast<models::Raw3dNet&>(*impl_->model).sfe();
      impl_->channels = spec.sfe_widths.back();
      break;
    case models::ModelKind::unet_restorer:
      impl_->net = &static_cast<models::UNetRestorer&>(*impl_->model).net();
      impl_->channels = spec.unet_widths.back();
      break;
    default:
      throw Error(fmt::format("checkpoint of kind {} has no encoder-decoder to embed with", to_string(spec.kind)));
  }
  impl_->name = fmt::format("{}-bottleneck-{}x{}", to_string(spec.kind), grid, grid);
  dim_ = impl_->channels * grid * grid;
}

CheckpointEmbeddingBackend::~CheckpointEmbeddingBackend() = default;

std::string CheckpointEmbeddingBackend::name() const { return impl_->name; }

Vector CheckpointEmbeddingBackend::embed(const AnalysisImage& image) const {
  const models::ModelSpec& spec = impl_->model->spec();
  const Size2 target{spec.height, spec.width};
  const Plane frame = size_of(image.frame) == target ? image.frame : resize_bilinear(image.frame, target);
  nn::Tensor x({1, 1, 1, target.height, target.width});
  for (Eigen::Index i = 0; i < frame.size(); ++i) x[i] = impl_->norm.apply(frame.data()[i]);

  std::lock_guard lock(impl_->mutex);
  impl_->net->forward(x, false);
  const nn::Tensor& b = impl_->net->bottleneck();  // (1, C, 1, h, w)
  const int C = b.dim(1), h = b.dim(3), w = b.dim(4), g = impl_->grid;
  if (h < g || w < g) throw Error(fmt::format("bottleneck {}x{} is smaller than the pooling grid {}", h, w, g));
  Vector out(static_cast<std::size_t>(C * g * g), 0.0);
  for (int c = 0; c < C; ++c)
    for (int gy = 0; gy < g; ++gy)
      for (int gx = 0; gx < g; ++gx) {
        const int r0 = gy * h / g, r1 = (gy + 1) * h / g, c0 = gx * w / g, c1 = (gx + 1) * w / g;
        double s = 0.0;
        for (int r = r0; r < r1; ++r)
          for (int q = c0; q < c1; ++q) s += b[(static_cast<long>(c) * h + r) * w + q];
        out[static_cast<std::size_t>((c * g + gy) * g + gx)] = s / ((r1 - r0) * (c1 - c0));
      }
  return out;
}

// --- pertinence ---------------------------------------------------------------

EmbeddingsByClass embed_by_class(const std::vector<AnalysisImage>& images, const EmbeddingBackend& backend) {
  EmbeddingsByClass out;
  for (const auto& img : images) out[img.class_id].push_back(backend.embed(img));
  return out;
}

double average_similarity(const std::vector<Vector>& a, const std::vector<Vector>& b, bool same_set) {
  double sum = 0.0;
  long n = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (same_set && i == j) continue;
      sum += cosine_similarity(a[i], b[j]);
      ++n;
    }
  if (n == 0) throw Error("average_similarity: no pairs");
  return sum / static_cast<double>(n);
}

long PertinenceRow::total() const {
  long t = 0;
  for (long c : counts) t += c;
  return t;
}

PertinenceRow pertinence_counts(const EmbeddingsByClass& embeddings, int evaluated_class,
                                const std::vector<int>& candidate_classes) {
  if (candidate_classes.empty()) throw Error("pertinence_counts: no candidate classes");
  std::vector<int> candidates = candidate_classes;
  std::sort(candidates.begin(), candidates.end());
  if (std::adjacent_find(candidates.begin(), candidates.end()) != candidates.end())
    throw Error("pertinence_counts: duplicate candidate class");
  const auto eval_it = embeddings.find(evaluated_class);
  if (eval_it == embeddings.end() || eval_it->second.empty())
    throw Error(fmt::format("pertinence_counts: no images of evaluated class {}", evaluated_class));
  for (int c : candidates) {
    const auto it = embeddings.find(c);
    if (it == embeddings.end() || it->second.empty())
      throw Error(fmt::format("pertinence_counts: no images of candidate class {}", c));
    if (c == evaluated_class && it->second.size() < 2)
      throw Error(fmt::format("pertinence_counts: evaluated class {} needs at least 2 images for leave-one-out", c));
  }

  const auto& queries = eval_it->second;
  PertinenceRow row;
  row.evaluated_class = evaluated_class;
  row.candidates = candidates;
  row.counts.assign(candidates.size(), 0);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < candidates.size(); ++k) {
      const auto& members = embeddings.at(candidates[k]);
      double sum = 0.0;
      long n = 0;
      for (std::size_t m = 0; m < members.size(); ++m) {
        if (candidates[k] == evaluated_class && m == q) continue;
        sum += cosine_similarity(queries[q], members[m]);
        ++n;
      }
      const double score = sum / static_cast<double>(n);
      if (score > best_score) {  // strict: the lowest index keeps ties
        best_score = score;
        best = k;
      }
    }
    ++row.counts[best];
  }
  return row;
}

PertinenceRow pertinence_counts(const std::vector<AnalysisImage>& images, int evaluated_class,
                                const std::vector<int>& candidate_classes, const EmbeddingBackend& backend) {
  return pertinence_counts(embed_by_class(images, backend), evaluated_class, candidate_classes);
}

std::vector<std::vector<double>> class_similarity_matrix(const EmbeddingsByClass& embeddings) {
  std::vector<const std::vector<Vector>*> sets;
  for (const auto& [c, v] : embeddings) sets.push_back(&v);
  std::vector<std::vector<double>> m(sets.size(), std::vector<double>(sets.size(), 0.0));
  for (std::size_t i = 0; i < sets.size(); ++i)
    for (std::size_t j = 0; j < sets.size(); ++j) m[i][j] = average_similarity(*sets[i], *sets[j], i == j);
  return m;
}

// --- error attribution ----------------------------------------------------------

ErrorAttribution error_attribution(const std::vector<std::vector<long>>& confusion) {
  if (confusion.size() != static_cast<std::size_t>(kNumClasses))
    throw Error(fmt::format("error_attribution: expected {} rows, got {}", kNumClasses, confusion.size()));
  ErrorAttribution out;
  for (int t = 0; t < kNumClasses; ++t) {
    const auto& row = confusion[static_cast<std::size_t>(t)];
    if (row.size() != static_cast<std::size_t>(kNumClasses))
      throw Error(fmt::format("error_attribution: row {} has {} entries", t, row.size()));
    for (int p = 0; p < kNumClasses; ++p) {
      const long n = row[static_cast<std::size_t>(p)];
      if (n < 0) throw Error("error_attribution: negative count");
      if (t == p) continue;
      const bool shape_wrong = dataset::shape_of(t) != dataset::shape_of(p);
      const bool motion_wrong = dataset::motion_of(t) != dataset::motion_of(p);
      if (shape_wrong && motion_wrong)
        out.both += n;
      else if (shape_wrong)
        out.shape += n;
      else
        out.motion += n;
    }
  }
  return out;
}

ErrorAttribution error_attribution(const std::array<std::array<long, 9>, 9>& confusion) {
  std::vector<std::vector<long>> m;
  for (const auto& r : confusion) m.emplace_back(r.begin(), r.end());
  return error_attribution(m);
}

void write_pertinence_csv(const fs::path& path, const std::vector<PertinenceRow>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "evaluated_class";
  if (!rows.empty())
    for (int c : rows.front().candidates) out << ",class_" << c;
  out << ",total\n";
  for (const auto& r : rows) {
    out << r.evaluated_class;
    for (long n : r.counts) out << "," << n;
    out << "," << r.total() << "\n";
  }
}

void write_confusion_csv(const fs::path& path, const std::array<std::array<long, 9>, 9>& confusion) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "true\\predicted";
  for (int p = 0; p < kNumClasses; ++p) out << "," << dataset::class_dir_name(p);
  out << "\n";
  for (int t = 0; t < kNumClasses; ++t) {
    out << dataset::class_dir_name(t);
    for (int p = 0; p < kNumClasses; ++p) out << "," << confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    out << "\n";
  }
}

}  // namespace lgr::analysis
