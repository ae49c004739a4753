#pragma once

#include "lgr/models.hpp"
#include "lgr/optics.hpp"
#include "lgr/recon.hpp"
#include "lgr/sampling.hpp"
#include "lgr/training.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lgr::config {

inline constexpr int kSchemaVersion = 1;

struct DatasetSection {
  std::string root;      // dataset root directory
  std::string manifest;  // saved manifest JSON; used instead of scanning when set
  std::string layout = "cambridge";
  std::string color = "luma";
  double test_fraction = 0.20;
  double val_fraction = 0.15;  // of the non-test pool
  int max_subvideos = 4;
  int height = 240;  // clip geometry after decoding
  int width = 320;
  // original | admm | unet | lensless
  std::string variant = "lensless";
};

struct OpticsSection {
  std::string psf;  // PSF image; a synthetic caustic is used when empty
  int psf_height = 0;  // synthetic PSF size; 0 means the scene size
  int psf_width = 0;
  int psf_points = 0;
  double psf_blur = 1.5;
  int sensor_h = 0;  // 0 means the scene size
  int sensor_w = 0;
  int pad_h = 0;  // 0 means scene + psf - 1
  int pad_w = 0;
  double noise_sigma = 0.0;
};

struct SamplingSection {
  std::string method = "none";
  int target_h = 75;
  int target_w = 100;
  double keep_fraction = 1.0;
};

struct ModelSection {
  std::string kind = "raw3dnet";
  // full: reference widths; reduced: desk-scale widths.
  std::string preset = "full";
  std::vector<int> sfe_widths;  // empty: take the preset
  std::vector<int> resnet_widths;
  std::vector<int> unet_widths;
  int stem_kernel = 0;  // 0: take the preset
};

struct ReconSection {
  double rho_data = 1.0;
  double rho_tv = 5e-3;
  double rho_nonneg = 1e-2;
  double tv_weight = 1e-3;
  int max_iters = 200;
  double primal_tol = 1e-3;
  double dual_tol = 1e-3;
  bool adaptive_rho = false;
  // U-Net restorer training for the learned reconstruction variant.
  int restorer_epochs = 30;
  int restorer_batch = 8;
  int restorer_frames = 200;
  double restorer_lr_start = 1e-3;
  double restorer_lr_end = 1e-5;
};

struct AnalysisSection {
  int frame_index = 0;
  std::string slice = "all";  // all | train | val | test
  std::string input = "raw";  // raw | scene: which frames are embedded
  int evaluated_class = 0;
  std::vector<int> candidate_classes{0, 3, 6};
  std::string embeddings;  // embedding file; otherwise checkpoint features
  std::string checkpoint;
  int grid = 4;
};

struct OutputSection {
  std::string dir = "out";
  std::string cache_dir;  // falls back to $LGR_CACHE_DIR
  bool emit_panels = false;
  int panel_clips = 4;
};

struct GridSection {
  std::string table = "variants";  // variants | sampling
  std::vector<std::string> cells;  // empty: every cell of the table
  int parallel = 1;
};

// Top-level seed fans out to every random stream by labeled hashing, so the
// sections carry no seeds of their own.
struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  std::uint64_t seed = 0;
  DatasetSection dataset;
  OpticsSection optics;
  SamplingSection sampling;
  ModelSection model;
  training::TrainConfig training;
  ReconSection recon;
  AnalysisSection analysis;
  OutputSection output;
  GridSection grid;

  // Throws Error listing every problem found, one per line.
  void validate() const;

  models::ModelSpec model_spec(models::ModelKind kind, Size2 geometry) const;
  training::TrainConfig train_config(std::string_view label) const;
  recon::AdmmParams admm_params() const;
  sampling::SampleSpec sample_spec() const;
  optics::NoiseSpec noise_spec() const;
  std::filesystem::path cache_dir() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig from_json(const nlohmann::json& j);

// Document order follows the section list above.
std::string to_yaml(const ExperimentConfig& c);

// YAML text -> config. Every key must exist in the schema (the JSON form of
// the default config) and have a compatible type; overrides of the form
// "section.key=value" are applied afterwards and win over the document.
ExperimentConfig parse_config(const std::string& yaml_text, const std::vector<std::string>& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
void save_config(const std::filesystem::path& path, const ExperimentConfig& c);

// Applies one "section.key=value" override to a JSON document shaped like the
// schema.
void apply_override(nlohmann::json& doc, const std::string& assignment);

}  // namespace lgr::config
