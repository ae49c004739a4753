#pragma once

#include "lgr/config.hpp"
#include "lgr/provenance.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace lgr::cli {

// State shared by every subcommand: the raw argument vector, the config file
// and overrides, and the resolved configuration.
struct Context {
  std::vector<std::string> argv;
  std::string command;
  std::string config_path;
  std::vector<std::string> overrides;
  bool force = false;
  bool quiet = false;
  config::ExperimentConfig cfg;

  // Parses the config file (or the defaults) and applies the overrides.
  void resolve();
  provenance::Manifest manifest() const;
  void log(const std::string& msg) const;
};

struct FixtureArgs {
  std::string out;
  std::vector<int> classes;
  int sequences = 3;
  int min_frames = 16;
  int max_frames = 16;
  int height = 48;
  int width = 64;
  std::uint64_t seed = 0;
  bool empty_files = false;
};

struct SimulateArgs {
  std::string in;
  std::string out;
  std::string psf;
  std::string format = "tiff32f";
};

struct DownsampleArgs {
  std::string in;
  std::string out;
  std::string format = "tiff32f";
};

struct ReconstructArgs {
  std::string psf;
  std::string in;
  std::string out;
  std::optional<int> iters;
  std::optional<double> tv;
  std::string format = "png16";
};

struct TrainArgs {
  std::string out;
};

struct EvalArgs {
  std::string checkpoint;
  std::string out;
  std::string split = "test";
  bool emit_panels = false;
};

struct GridArgs {
  std::string out;
};

struct AnalyzeArgs {
  std::string out;
  std::string eval_json;
};

struct DescribeArgs {
  std::string kind;
  std::optional<int> height;
  std::optional<int> width;
  std::string out;
};

int run_fixture(Context& ctx, const FixtureArgs& a);
int run_simulate(Context& ctx, const SimulateArgs& a);
int run_downsample(Context& ctx, const DownsampleArgs& a);
int run_reconstruct(Context& ctx, const ReconstructArgs& a);
int run_train(Context& ctx, const TrainArgs& a);
int run_eval(Context& ctx, const EvalArgs& a);
int run_grid(Context& ctx, const GridArgs& a);
int run_analyze(Context& ctx, const AnalyzeArgs& a);
int run_describe(Context& ctx, const DescribeArgs& a);

}  // namespace lgr::cli
