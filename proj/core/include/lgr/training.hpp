#pragma once

#include "lgr/checkpoint.hpp"
#include "lgr/clip.hpp"
#include "lgr/models.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace lgr::training {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 12;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;
  double weight_decay = 0.001;
  double lr_start = 1e-3;
  double lr_end = 1e-5;
  std::string schedule = "linear";
  std::string loss = "cross_entropy";
  std::uint64_t seed = 0;
  // Stop after this many optimizer steps (0 = run every epoch). The learning
  // rate still ramps over the full epochs * batches_per_epoch horizon unless
  // the cap is smaller, in which case the cap is the horizon.
  long max_steps = 0;
  // Min-max scale raw clips with statistics of the training stream.
  bool normalize_raw = true;

  void validate() const;
  // Hex SHA-256 of the canonical JSON form.
  std::string digest() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Linear ramp from lr_start at step 0 to lr_end at total_steps.
double lr_at(long step, long total_steps, const TrainConfig& config);

// Adam with decoupled weight decay. Parameters flagged decay = false
// (batch-norm scale and shift) are not decayed.
class AdamW {
 public:
  AdamW(std::vector<nn::Parameter*> params, double beta1, double beta2, double epsilon, double weight_decay);
  void step(double lr);
  long steps() const { return t_; }

 private:
  std::vector<nn::Parameter*> params_;
  std::vector<std::vector<double>> m_, v_;
  double beta1_, beta2_, epsilon_, weight_decay_;
  long t_ = 0;
};

struct Sample {
  VideoClip clip;
  int illumination = 0;
  std::string source_id;
};

// Random-access labeled clips. Implementations may decode lazily; get() must
// be deterministic.
class ClipStream {
 public:
  virtual ~ClipStream() = default;
  virtual std::size_t size() const = 0;
  virtual Sample get(std::size_t i) const = 0;
};

class MemoryStream : public ClipStream {
 public:
  MemoryStream() = default;
  explicit MemoryStream(std::vector<Sample> samples) : samples_(std::move(samples)) {}
  std::size_t size() const override { return samples_.size(); }
  Sample get(std::size_t i) const override { return samples_.at(i); }
  void push_back(Sample s) { samples_.push_back(std::move(s)); }
  const std::vector<Sample>& samples() const { return samples_; }

 private:
  std::vector<Sample> samples_;
};

// Applies a per-sample transform on top of another stream.
class MappedStream : public ClipStream {
 public:
  MappedStream(std::shared_ptr<const ClipStream> base, std::function<Sample(Sample)> fn)
      : base_(std::move(base)), fn_(std::move(fn)) {}
  std::size_t size() const override { return base_->size(); }
  Sample get(std::size_t i) const override { return fn_(base_->get(i)); }

 private:
  std::shared_ptr<const ClipStream> base_;
  std::function<Sample(Sample)> fn_;
};

// Min-max scaling of raw measurements; fitted on the training stream only.
struct Normalizer {
  bool enabled = false;
  double lo = 0.0;
  double hi = 1.0;

  static Normalizer fit(const ClipStream& train);
  double apply(double v) const { return enabled ? (v - lo) / (hi - lo) : v; }
  friend bool operator==(const Normalizer&, const Normalizer&) = default;
};

void to_json(nlohmann::json& j, const Normalizer& n);
void from_json(const nlohmann::json& j, Normalizer& n);

// Stacks clips into (N, 1, L, H, W), scaling raw clips with the normalizer.
nn::Tensor batch_tensor(const std::vector<const VideoClip*>& clips, const Normalizer& norm);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double learning_rate = 0.0;  // at the last step of the epoch
  long steps = 0;              // cumulative optimizer steps
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_val_accuracy = 0.0;
  double wall_seconds = 0.0;
};

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history);

struct TrainResult {
  Checkpoint best;
  TrainHistory history;
};

// Called after each epoch; returning false stops training early.
using EpochCallback = std::function<bool(const EpochRecord&)>;

// Trains a classifier with cross-entropy and AdamW. Mini-batches are drawn
// from a permutation seeded per epoch; validation runs after each epoch and
// the best checkpoint (earliest on ties) is retained. Throws on a non-finite
// loss.
TrainResult train_classifier(const models::ModelSpec& spec, const ClipStream& train, const ClipStream& val,
                             const TrainConfig& config, const EpochCallback& on_epoch = {});

using ConfusionMatrix = std::array<std::array<long, kNumClasses>, kNumClasses>;

struct EvalResult {
  double accuracy = 0.0;
  long correct = 0;
  long total = 0;
  ConfusionMatrix confusion{};
  // illumination -> (correct, total)
  std::map<int, std::pair<long, long>> per_illumination;
  std::vector<int> predictions;

  double illumination_accuracy(int illumination) const;
};

nlohmann::json eval_to_json(const EvalResult& r);

// Scores a list of predictions. Throws on empty input or out-of-range labels.
EvalResult score_predictions(const std::vector<int>& truth, const std::vector<int>& predicted,
                             const std::vector<int>& illumination);

// Evaluates a predictor over a stream in stream order.
EvalResult evaluate_predictor(const ClipStream& stream, const std::function<int(const Sample&)>& predictor);

// Inference-mode evaluation of a model; ties in the logits go to the lowest
// class index.
EvalResult evaluate_model(models::Model& model, const ClipStream& stream, const Normalizer& norm,
                          int batch_size = 12);
// Builds the model from the checkpoint and uses its stored normalizer.
EvalResult evaluate_checkpoint(const Checkpoint& ckpt, const ClipStream& stream, int batch_size = 12);

Normalizer normalizer_of(const Checkpoint& ckpt);

// --- Restorer (U-Net) ---------------------------------------------------------

struct FramePair {
  Plane input;
  Plane target;
};

struct RestorerResult {
  Checkpoint model;
  std::vector<double> epoch_loss;  // mean per-pixel MSE per epoch
};

// Per-pixel MSE training of a U-Net restorer on (raw, scene) frame pairs.
// The normalizer is fitted on the inputs and stored with the checkpoint.
RestorerResult train_restorer(const models::ModelSpec& spec, const std::vector<FramePair>& pairs,
                              const TrainConfig& config);

// Mean per-pixel MSE of the restorer on pairs, in inference mode.
double restorer_mse(const Checkpoint& ckpt, const std::vector<FramePair>& pairs);

// Frame-wise restoration of a raw clip; kind becomes reconstructed.
VideoClip restore_clip(models::Model& model, const VideoClip& raw, const Normalizer& norm);

}  // namespace lgr::training
