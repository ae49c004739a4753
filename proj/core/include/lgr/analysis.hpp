#pragma once

#include "lgr/checkpoint.hpp"
#include "lgr/image.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace lgr::analysis {

using Vector = std::vector<double>;

// <a, b> / (|a| |b|), clamped to [-1, 1]. Throws on a zero vector or a
// dimension mismatch.
double cosine_similarity(const Vector& a, const Vector& b);

// An image selected for analysis: one frame of one sequence.
struct AnalysisImage {
  std::string id;
  int class_id = 0;
  Plane frame;
};

// Deterministic mapping image -> D-vector.
class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual std::string name() const = 0;
  virtual int dim() const = 0;
  virtual Vector embed(const AnalysisImage& image) const = 0;
};

// id -> vector table. CSV rows are "id,v0,v1,..." with an optional header
// line whose second field is not numeric; JSON is an object {id: [v...]}.
// The format follows the extension (.csv or .json).
std::map<std::string, Vector> load_embeddings(const std::filesystem::path& path);
void save_embeddings(const std::filesystem::path& path, const std::map<std::string, Vector>& table);

// Looks vectors up by image id.
class FileEmbeddingBackend : public EmbeddingBackend {
 public:
  explicit FileEmbeddingBackend(std::map<std::string, Vector> table, std::string name = "file");
  static FileEmbeddingBackend load(const std::filesystem::path& path);

  std::string name() const override { return name_; }
  int dim() const override { return dim_; }
  Vector embed(const AnalysisImage& image) const override;
  const std::map<std::string, Vector>& table() const { return table_; }

 private:
  std::map<std::string, Vector> table_;
  std::string name_;
  int dim_ = 0;
};

// Bottleneck features of the encoder-decoder inside an SFE, U-Net or Raw3dNet
// checkpoint, average-pooled over a grid x grid partition of the bottleneck
// and flattened channel-major (D = channels * grid^2; 512 for the default
// SFE widths). Frames are resized to the model geometry and scaled with the
// checkpoint normalizer.
class CheckpointEmbeddingBackend : public EmbeddingBackend {
 public:
  explicit CheckpointEmbeddingBackend(const Checkpoint& ckpt, int grid = 4);
  ~CheckpointEmbeddingBackend() override;

  std::string name() const override;
  int dim() const override { return dim_; }
  Vector embed(const AnalysisImage& image) const override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int dim_ = 0;
};

using EmbeddingsByClass = std::map<int, std::vector<Vector>>;

EmbeddingsByClass embed_by_class(const std::vector<AnalysisImage>& images, const EmbeddingBackend& backend);

// Mean cosine similarity between every member of a and every member of b.
// With same_set, a and b are the same collection and self-pairs are skipped.
double average_similarity(const std::vector<Vector>& a, const std::vector<Vector>& b, bool same_set);

struct PertinenceRow {
  int evaluated_class = 0;
  std::vector<int> candidates;
  std::vector<long> counts;  // aligned with candidates

  long total() const;
};

// For every image of the evaluated class, the mean similarity to each
// candidate class (leaving the image out of its own class) picks the most
// pertinent class; ties go to the lowest class index.
PertinenceRow pertinence_counts(const EmbeddingsByClass& embeddings, int evaluated_class,
                                const std::vector<int>& candidate_classes);
PertinenceRow pertinence_counts(const std::vector<AnalysisImage>& images, int evaluated_class,
                                const std::vector<int>& candidate_classes, const EmbeddingBackend& backend);

// Mean pairwise similarity between classes (rows/cols follow the map order;
// diagonal entries leave self-pairs out).
std::vector<std::vector<double>> class_similarity_matrix(const EmbeddingsByClass& embeddings);

struct ErrorAttribution {
  long shape = 0;   // motion right, shape wrong
  long motion = 0;  // shape right, motion wrong
  long both = 0;

  long total() const { return shape + motion + both; }
  friend bool operator==(const ErrorAttribution&, const ErrorAttribution&) = default;
};

// Splits off-diagonal confusion mass by which factor of class = 3 * shape +
// motion was mispredicted. Throws unless the matrix is 9x9 with non-negative
// entries.
ErrorAttribution error_attribution(const std::vector<std::vector<long>>& confusion);
ErrorAttribution error_attribution(const std::array<std::array<long, 9>, 9>& confusion);

void write_pertinence_csv(const std::filesystem::path& path, const std::vector<PertinenceRow>& rows);
void write_confusion_csv(const std::filesystem::path& path, const std::array<std::array<long, 9>, 9>& confusion);

}  // namespace lgr::analysis
