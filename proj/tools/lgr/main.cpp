#include "commands.hpp"

#include "lgr/error.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdio>
#include <exception>

using namespace lgr::cli;

namespace {

std::string join_list(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + items[i];
  return out + "]";
}

}  // namespace

int main(int argc, char** argv) {
  Context ctx;
  ctx.argv.assign(argv, argv + argc);

  CLI::App app{"Lensless hand-gesture recognition toolkit", "lgr"};
  app.set_version_flag("--version", LGR_VERSION);
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();
  app.add_option("-c,--config", ctx.config_path, "Experiment config (YAML)")->check(CLI::ExistingFile);
  app.add_option("--set", ctx.overrides, "Override a config key: section.key=value (repeatable)");
  app.add_flag("--force", ctx.force, "Allow writing into a non-empty output directory");
  app.add_flag("-q,--quiet", ctx.quiet, "Suppress progress messages");

  FixtureArgs fixture;
  auto* fx = app.add_subcommand("fixture", "Write a synthetic gesture dataset in the cambridge layout");
  fx->add_option("--out", fixture.out, "Dataset root to create")->required();
  fx->add_option("--classes", fixture.classes, "Class indices (default: all nine)");
  fx->add_option("--sequences", fixture.sequences, "Sequences per class");
  fx->add_option("--min-frames", fixture.min_frames);
  fx->add_option("--max-frames", fixture.max_frames);
  fx->add_option("--height", fixture.height);
  fx->add_option("--width", fixture.width);
  fx->add_option("--seed", fixture.seed);
  fx->add_flag("--empty-files", fixture.empty_files, "Zero-byte frames (accounting only)");

  SimulateArgs sim;
  auto* sm = app.add_subcommand("simulate", "Scene frames -> raw lensless frames");
  sm->add_option("--in", sim.in, "Directory of scene frames")->required()->check(CLI::ExistingDirectory);
  sm->add_option("--out", sim.out, "Output directory")->required();
  sm->add_option("--psf", sim.psf, "PSF image (default: optics.psf or a synthetic caustic)");
  sm->add_option("--format", sim.format, "png8 | png16 | tiff32f");

  DownsampleArgs ds;
  auto* dn = app.add_subcommand("downsample", "Apply the configured sampling mask to every frame");
  dn->add_option("--in", ds.in, "Directory of frames")->required()->check(CLI::ExistingDirectory);
  dn->add_option("--out", ds.out, "Output directory")->required();
  dn->add_option("--format", ds.format, "png8 | png16 | tiff32f");
  std::string ds_method, ds_target;
  double ds_keep = 0.0;
  dn->add_option("--method", ds_method, "none | resize | uniform | random | erase");
  dn->add_option("--target", ds_target, "Target size WxH, e.g. 100x75");
  dn->add_option("--keep", ds_keep, "Retained fraction for erase");

  ReconstructArgs rc;
  auto* re = app.add_subcommand("reconstruct", "ADMM reconstruction of raw frames");
  re->add_option("--psf", rc.psf, "PSF image (default: optics.psf)");
  re->add_option("--in", rc.in, "Directory of raw frames")->required()->check(CLI::ExistingDirectory);
  re->add_option("--out", rc.out, "Output directory")->required();
  re->add_option("--iters", rc.iters, "Maximum ADMM iterations");
  re->add_option("--tv", rc.tv, "TV weight");
  re->add_option("--format", rc.format, "png8 | png16 | tiff32f");

  TrainArgs tr;
  auto* tn = app.add_subcommand("train", "Train a classifier on the configured dataset variant");
  tn->add_option("--out", tr.out, "Output directory (default: output.dir)");

  EvalArgs ev;
  auto* el = app.add_subcommand("eval", "Evaluate a checkpoint on a split of the configured variant");
  el->add_option("--checkpoint", ev.checkpoint, "Classifier checkpoint")->required()->check(CLI::ExistingFile);
  el->add_option("--out", ev.out, "Output directory (default: output.dir)");
  el->add_option("--split", ev.split, "train | val | test");
  el->add_flag("--emit-panels", ev.emit_panels, "Write frame panels of the evaluated clips");

  GridArgs gr;
  auto* gd = app.add_subcommand("grid", "Run the dataset-variant grid or the down-sampling grid");
  gd->add_option("--out", gr.out, "Output directory (default: output.dir)");
  std::string grid_table;
  std::vector<std::string> grid_cells;
  int grid_parallel = 0;
  gd->add_option("--table", grid_table, "variants | sampling");
  gd->add_option("--cells", grid_cells, "Subset of cell names");
  gd->add_option("--parallel", grid_parallel, "Cells trained concurrently");

  AnalyzeArgs an;
  auto* az = app.add_subcommand("analyze", "Pertinence counts and shape/motion error attribution");
  az->add_option("--out", an.out, "Output directory (default: output.dir)");
  az->add_option("--eval", an.eval_json, "eval.json whose confusion matrix is attributed")->check(CLI::ExistingFile);
  std::string an_embeddings, an_checkpoint;
  az->add_option("--embeddings", an_embeddings, "Embedding file (CSV or JSON)");
  az->add_option("--checkpoint", an_checkpoint, "Checkpoint whose bottleneck features embed the images");

  DescribeArgs de;
  auto* dc = app.add_subcommand("describe", "Print the layer/shape table of a model");
  dc->add_option("kind", de.kind, "sfe | resnet3d | raw3dnet | unet_restorer")->required();
  dc->add_option("--height", de.height);
  dc->add_option("--width", de.width);
  dc->add_option("--out", de.out, "Also write table.txt and a manifest here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  // Convenience flags are recorded as ordinary overrides.
  if (!ds_method.empty()) ctx.overrides.push_back("sampling.method=" + ds_method);
  if (!ds_target.empty()) {
    const auto x = ds_target.find('x');
    if (x == std::string::npos) {
      std::fprintf(stderr, "lgr downsample: --target must look like 100x75\n");
      return 2;
    }
    ctx.overrides.push_back("sampling.target_w=" + ds_target.substr(0, x));
    ctx.overrides.push_back("sampling.target_h=" + ds_target.substr(x + 1));
  }
  if (ds_keep > 0.0) ctx.overrides.push_back(fmt::format("sampling.keep_fraction={}", ds_keep));
  if (rc.iters) ctx.overrides.push_back(fmt::format("recon.max_iters={}", *rc.iters));
  if (rc.tv) ctx.overrides.push_back(fmt::format("recon.tv_weight={}", *rc.tv));
  if (!grid_table.empty()) ctx.overrides.push_back("grid.table=" + grid_table);
  if (!grid_cells.empty()) ctx.overrides.push_back("grid.cells=" + join_list(grid_cells));
  if (grid_parallel > 0) ctx.overrides.push_back(fmt::format("grid.parallel={}", grid_parallel));
  if (!an_embeddings.empty()) ctx.overrides.push_back("analysis.embeddings=" + an_embeddings);
  if (!an_checkpoint.empty()) ctx.overrides.push_back("analysis.checkpoint=" + an_checkpoint);
  if (ev.emit_panels) ctx.overrides.push_back("output.emit_panels=true");

  CLI::App* sub = app.get_subcommands().front();
  ctx.command = sub->get_name();
  try {
    ctx.resolve();
    if (sub == fx) return run_fixture(ctx, fixture);
    if (sub == sm) return run_simulate(ctx, sim);
    if (sub == dn) return run_downsample(ctx, ds);
    if (sub == re) return run_reconstruct(ctx, rc);
    if (sub == tn) return run_train(ctx, tr);
    if (sub == el) return run_eval(ctx, ev);
    if (sub == gd) return run_grid(ctx, gr);
    if (sub == az) return run_analyze(ctx, an);
    if (sub == dc) return run_describe(ctx, de);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "lgr %s: error: %s\n", ctx.command.c_str(), e.what());
    return 1;
  }
  return 1;
}
