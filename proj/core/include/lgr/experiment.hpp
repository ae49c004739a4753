#pragma once

#include "lgr/config.hpp"
#include "lgr/dataset.hpp"
#include "lgr/training.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace lgr::experiment {

enum class Variant { original, admm, unet, lensless };
const char* to_string(Variant v);
Variant variant_from_string(const std::string& s);

using Log = std::function<void(const std::string&)>;

struct SplitStreams {
  training::MemoryStream train;
  training::MemoryStream val;
  training::MemoryStream test;

  training::MemoryStream& get(dataset::Split s);
  const training::MemoryStream& get(dataset::Split s) const;
};

// Decoded scene clips for every split of the configured dataset.
struct SceneData {
  dataset::DatasetManifest manifest;
  SplitStreams streams;
  Size2 geometry;
};

// Loads dataset.manifest or scans dataset.root, then splits when the manifest
// carries no assignment.
dataset::DatasetManifest resolve_manifest(const config::ExperimentConfig& cfg);

// Resolves the manifest (see above), splits it when it carries no assignment,
// extracts sub-videos and decodes them at the configured geometry.
SceneData load_scene_data(const config::ExperimentConfig& cfg, const Log& log = {});

// PSF from optics.psf or a synthetic caustic seeded from the top-level seed.
std::shared_ptr<const optics::LenslessCamera> make_camera(const config::ExperimentConfig& cfg);

struct VariantData {
  Variant variant = Variant::lensless;
  SplitStreams streams;
  std::optional<Checkpoint> restorer;  // unet variant only
  std::string digest;                  // cache key of the materialized data
};

// Materializes one dataset variant. Lensless clips are simulated through the
// camera; admm and unet clips are reconstructed from those. When a cache
// directory is configured, results are stored under it by digest and reused.
VariantData build_variant(const config::ExperimentConfig& cfg, const SceneData& scenes,
                          const optics::LenslessCamera& camera, Variant variant, const Log& log = {});

// Smallest geometry >= size that the classifier accepts: at least 16 on each
// axis and divisible by the SFE pooling factor for Raw3dNet.
Size2 classifier_geometry(Size2 size, const models::ModelSpec& spec);
// Zero-pads every frame at the bottom and right.
VideoClip pad_clip(const VideoClip& clip, Size2 target);

// Down-samples every clip with one shared mask, then pads to the classifier
// geometry.
SplitStreams apply_sampling(const SplitStreams& in, const sampling::SampleSpec& spec, const models::ModelSpec& proto);

// Streams ready for a classifier of the given kind: sampled and padded when a
// sampling spec is given, otherwise checked against the classifier geometry.
SplitStreams classifier_inputs(const config::ExperimentConfig& cfg, const SplitStreams& data, models::ModelKind kind,
                               const std::optional<sampling::SampleSpec>& spec, const std::string& name);

struct CellSpec {
  std::string name;
  std::string label;
  Variant variant = Variant::lensless;
  models::ModelKind model = models::ModelKind::raw3dnet;
  std::optional<sampling::SampleSpec> sampling;
};

// Five-way variant comparison.
std::vector<CellSpec> variant_cells();
// Down-sampling comparison; targets scale with the source geometry so that a
// 240x320 source yields budgets of 7500 and 1850 values.
std::vector<CellSpec> sampling_cells(Size2 source, std::uint64_t seed);
// The configured table, restricted to grid.cells when that list is set.
std::vector<CellSpec> select_cells(const config::ExperimentConfig& cfg, Size2 source);

struct CellResult {
  CellSpec spec;
  long valid_pixels = 0;
  Size2 input;  // classifier geometry after sampling and padding
  std::uint64_t seed = 0;
  int best_epoch = -1;
  double best_val_accuracy = 0.0;
  training::EvalResult test;
  long train_clips = 0;
  long val_clips = 0;
  double wall_seconds = 0.0;
  std::string checkpoint;  // relative to the output directory
};

struct ExperimentReport {
  std::string table;
  std::uint64_t seed = 0;
  nlohmann::json config;
  std::vector<CellResult> rows;
};

nlohmann::json report_to_json(const ExperimentReport& r);
// report.json plus report.csv (one row per cell).
void write_report(const std::filesystem::path& dir, const ExperimentReport& r);

struct GridOptions {
  std::filesystem::path out_dir;  // per-cell checkpoints and histories; skipped when empty
  int parallel = 1;
  Log log;
};

ExperimentReport run_experiment_grid(const config::ExperimentConfig& cfg, const GridOptions& options);

// Frames of each clip in one row, clips stacked vertically; every frame is
// min-max scaled on its own. Written as 8-bit PNG.
void write_panel(const std::filesystem::path& path, const std::vector<const VideoClip*>& clips);

// Binary sample container used by the cache.
void save_samples(const std::filesystem::path& path, const training::MemoryStream& stream);
training::MemoryStream load_samples(const std::filesystem::path& path);

}  // namespace lgr::experiment
