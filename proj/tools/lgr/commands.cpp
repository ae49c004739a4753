#include "commands.hpp"

#include "lgr/analysis.hpp"
#include "lgr/checkpoint.hpp"
#include "lgr/dataset.hpp"
#include "lgr/error.hpp"
#include "lgr/experiment.hpp"
#include "lgr/models.hpp"
#include "lgr/optics.hpp"
#include "lgr/recon.hpp"
#include "lgr/rng.hpp"
#include "lgr/sampling.hpp"
#include "lgr/training.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

namespace lgr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

void Context::resolve() {
  cfg = config_path.empty() ? config::parse_config("{}", overrides) : config::load_config(config_path, overrides);
  cfg.validate();
}

provenance::Manifest Context::manifest() const {
  provenance::Manifest m;
  m.version = LGR_VERSION;
  m.command = command;
  m.argv = argv;
  m.config = config::to_json(cfg);
  m.overrides = overrides;
  m.seed = cfg.seed;
  if (!config_path.empty()) provenance::record_input(m, config_path);
  return m;
}

void Context::log(const std::string& msg) const {
  if (!quiet) std::fprintf(stderr, "[%s] %s\n", command.c_str(), msg.c_str());
}

namespace {

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

// Image files directly inside dir, sorted by name.
std::vector<fs::path> list_frames(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw Error("no image files in " + dir.string());
  return out;
}

fs::path output_name(const fs::path& dir, const fs::path& input, PixelFormat format) {
  return dir / (input.stem().string() + extension_for(format));
}

fs::path resolve_out(const Context& ctx, const std::string& out) {
  return out.empty() ? fs::path(ctx.cfg.output.dir) : fs::path(out);
}

// Writes config.yaml and the provenance manifest; called last so the
// manifest digests every output.
void finish(const Context& ctx, const fs::path& dir, provenance::Manifest m) {
  config::save_config(dir / "config.yaml", ctx.cfg);
  provenance::write_manifest(dir, std::move(m));
}

void record_dataset(const Context& ctx, provenance::Manifest& m) {
  if (!ctx.cfg.dataset.manifest.empty()) provenance::record_input(m, ctx.cfg.dataset.manifest);
  if (!ctx.cfg.dataset.root.empty()) m.extra["dataset_root"] = fs::absolute(ctx.cfg.dataset.root).string();
}

json attribution_json(const analysis::ErrorAttribution& a) {
  return {{"shape", a.shape}, {"motion", a.motion}, {"both", a.both}, {"total", a.total()}};
}

// Sampling spec from the config, or none when the method is "none".
std::optional<sampling::SampleSpec> configured_sampling(const config::ExperimentConfig& cfg) {
  const auto spec = cfg.sample_spec();
  if (spec.method == sampling::Method::none) return std::nullopt;
  return spec;
}

struct PreparedData {
  experiment::VariantData variant;
  experiment::SplitStreams inputs;
};

PreparedData prepare_data(const Context& ctx, models::ModelKind kind) {
  const auto log = [&ctx](const std::string& s) { ctx.log(s); };
  const auto scenes = experiment::load_scene_data(ctx.cfg, log);
  const auto camera = experiment::make_camera(ctx.cfg);
  const auto v = experiment::variant_from_string(ctx.cfg.dataset.variant);
  PreparedData p{experiment::build_variant(ctx.cfg, scenes, *camera, v, log), {}};
  p.inputs = experiment::classifier_inputs(ctx.cfg, p.variant.streams, kind, configured_sampling(ctx.cfg),
                                           ctx.cfg.dataset.variant);
  return p;
}

}  // namespace

int run_fixture(Context& ctx, const FixtureArgs& a) {
  dataset::FixtureSpec spec;
  if (!a.classes.empty()) spec.classes = a.classes;
  spec.sequences_per_class = a.sequences;
  spec.min_frames = a.min_frames;
  spec.max_frames = a.max_frames;
  spec.size = {a.height, a.width};
  spec.seed = a.seed;
  spec.empty_files = a.empty_files;

  const fs::path root(a.out);
  provenance::prepare_output_dir(root, ctx.force);
  dataset::write_gesture_fixture(root, spec);
  auto manifest = dataset::scan_dataset(root, dataset::Layout::cambridge, std::min(a.min_frames, kClipLength));
  manifest = dataset::split_dataset(std::move(manifest), ctx.cfg.dataset.test_fraction, ctx.cfg.dataset.val_fraction,
                                    derive_seed(ctx.cfg.seed, "split"));
  dataset::save_manifest(root / "manifest.json", manifest);
  ctx.log(fmt::format("{} sequences in {} classes written to {}", manifest.sequences.size(), spec.classes.size(),
                      root.string()));

  auto m = ctx.manifest();
  m.extra["fixture"] = {{"classes", spec.classes},     {"sequences", spec.sequences_per_class},
                        {"min_frames", spec.min_frames}, {"max_frames", spec.max_frames},
                        {"height", spec.size.height},  {"width", spec.size.width},
                        {"seed", spec.seed},           {"empty_files", spec.empty_files}};
  provenance::write_manifest(root, std::move(m));
  return 0;
}

int run_simulate(Context& ctx, const SimulateArgs& a) {
  const auto format = pixel_format_from_name(a.format);
  const auto frames = list_frames(a.in);
  const fs::path out(a.out);
  provenance::prepare_output_dir(out, ctx.force);

  auto m = ctx.manifest();
  provenance::record_input(m, a.in);
  config::ExperimentConfig local = ctx.cfg;
  if (!a.psf.empty()) local.optics.psf = a.psf;
  if (!local.optics.psf.empty()) provenance::record_input(m, local.optics.psf);

  const auto policy = dataset::color_policy_from_string(ctx.cfg.dataset.color);
  const optics::NoiseSpec base_noise = ctx.cfg.noise_spec();
  std::shared_ptr<const optics::LenslessCamera> camera;
  for (const auto& path : frames) {
    const Plane scene = dataset::load_frame(path, policy);
    const Size2 size = size_of(scene);
    if (!camera || camera->geometry().scene != size) {
      if (camera) throw Error(fmt::format("{}: frame size differs from the first frame", path.string()));
      local.dataset.height = size.height;
      local.dataset.width = size.width;
      camera = experiment::make_camera(local);
    }
    optics::NoiseSpec noise = base_noise;
    noise.seed = derive_seed(base_noise.seed, path.filename().string());
    const auto measured = optics::forward_measure(scene, *camera, noise);
    write_image(output_name(out, path, format), measured.pixels, format);
  }
  fs::create_directories(out / "psf");
  optics::save_psf(out / "psf" / "psf.tiff", camera->psf());
  const auto& g = camera->geometry();
  m.extra["geometry"] = {{"scene", {g.scene.height, g.scene.width}},
                         {"psf", {g.psf.height, g.psf.width}},
                         {"sensor", {g.sensor.height, g.sensor.width}},
                         {"padded", {g.padded.height, g.padded.width}}};
  m.extra["psf_name"] = camera->psf().name;
  ctx.log(fmt::format("simulated {} frames", frames.size()));
  finish(ctx, out, std::move(m));
  return 0;
}

int run_downsample(Context& ctx, const DownsampleArgs& a) {
  const auto format = pixel_format_from_name(a.format);
  const auto frames = list_frames(a.in);
  const fs::path out(a.out);
  provenance::prepare_output_dir(out, ctx.force);
  auto m = ctx.manifest();
  provenance::record_input(m, a.in);

  const auto policy = dataset::color_policy_from_string(ctx.cfg.dataset.color);
  std::optional<sampling::SamplingMask> mask;
  for (const auto& path : frames) {
    const Plane frame = dataset::load_frame(path, policy);
    if (!mask) {
      mask = sampling::make_mask(ctx.cfg.sample_spec(), size_of(frame));
    } else if (size_of(frame) != mask->source) {
      throw Error(fmt::format("{}: frame size differs from the first frame", path.string()));
    }
    write_image(output_name(out, path, format), sampling::downsample_frame(frame, *mask), format);
  }
  write_json(out / "mask.json", sampling::mask_to_json(*mask));
  m.extra["valid_pixels"] = mask->spec.valid_pixels();
  ctx.log(fmt::format("down-sampled {} frames with method {}", frames.size(), sampling::to_string(mask->spec.method)));
  finish(ctx, out, std::move(m));
  return 0;
}

int run_reconstruct(Context& ctx, const ReconstructArgs& a) {
  const auto format = pixel_format_from_name(a.format);
  const std::string psf_path = a.psf.empty() ? ctx.cfg.optics.psf : a.psf;
  if (psf_path.empty()) throw Error("reconstruct needs a PSF: pass --psf or set optics.psf");
  const auto frames = list_frames(a.in);
  const fs::path out(a.out);
  provenance::prepare_output_dir(out, ctx.force);
  auto m = ctx.manifest();
  provenance::record_input(m, a.in);
  provenance::record_input(m, psf_path);

  const auto psf = optics::load_psf(psf_path);
  const auto params = ctx.cfg.admm_params();
  const auto& o = ctx.cfg.optics;
  fs::create_directories(out / "residuals");
  std::ofstream summary(out / "summary.csv");
  summary << "frame,iterations,converged,primal,dual,objective\n";

  std::shared_ptr<const optics::LenslessCamera> camera;
  for (const auto& path : frames) {
    const Plane raw = dataset::load_frame(path, dataset::ColorPolicy::first_channel);
    const Size2 size = size_of(raw);
    if (!camera) {
      const auto g = optics::SensorGeometry::centered(size, psf.size(), {}, {o.pad_h, o.pad_w});
      camera = std::make_shared<const optics::LenslessCamera>(g, psf);
    } else if (camera->geometry().sensor != size) {
      throw Error(fmt::format("{}: frame size differs from the first frame", path.string()));
    }
    const auto result = recon::admm_reconstruct({raw, false}, *camera, params);
    write_image(output_name(out, path, format), result.scene, format);

    std::ofstream res(out / "residuals" / (path.stem().string() + ".csv"));
    res << "iter,primal,dual,objective\n";
    for (const auto& r : result.history)
      res << fmt::format("{},{:.9g},{:.9g},{:.9g}\n", r.iter, r.primal, r.dual, r.objective);
    const auto& last = result.history.back();
    summary << fmt::format("{},{},{},{:.9g},{:.9g},{:.9g}\n", path.filename().string(), result.history.size(),
                           result.converged ? 1 : 0, last.primal, last.dual, last.objective);
    ctx.log(fmt::format("{}: {} iterations{}", path.filename().string(), result.history.size(),
                        result.converged ? ", converged" : ""));
  }
  summary.close();
  finish(ctx, out, std::move(m));
  return 0;
}

int run_train(Context& ctx, const TrainArgs& a) {
  const fs::path out = resolve_out(ctx, a.out);
  provenance::prepare_output_dir(out, ctx.force);
  auto m = ctx.manifest();
  record_dataset(ctx, m);

  const auto kind = models::model_kind_from_string(ctx.cfg.model.kind);
  if (kind != models::ModelKind::resnet3d && kind != models::ModelKind::raw3dnet)
    throw Error("train: model.kind must be a classifier (resnet3d or raw3dnet)");
  const PreparedData data = prepare_data(ctx, kind);
  const Size2 input = data.inputs.train.samples().front().clip.frame_size();
  const auto spec = ctx.cfg.model_spec(kind, input);
  const auto tc = ctx.cfg.train_config("train");
  ctx.log(fmt::format("training {} on {}x{} clips ({} train, {} val)", models::to_string(kind), input.height,
                      input.width, data.inputs.train.size(), data.inputs.val.size()));

  const auto result = training::train_classifier(spec, data.inputs.train, data.inputs.val, tc,
                                                  [&ctx](const training::EpochRecord& r) {
                                                    ctx.log(fmt::format("epoch {}: loss {:.4f} train {:.3f} val {:.3f}",
                                                                        r.epoch, r.train_loss, r.train_accuracy,
                                                                        r.val_accuracy));
                                                    return true;
                                                  });
  save_checkpoint(out / "best.ckpt", result.best);
  training::write_history_csv(out / "history.csv", result.history);
  if (data.variant.restorer) save_checkpoint(out / "restorer.ckpt", *data.variant.restorer);

  const auto test = training::evaluate_checkpoint(result.best, data.inputs.test);
  json ev = training::eval_to_json(test);
  ev["split"] = "test";
  ev["best_epoch"] = result.history.best_epoch;
  ev["best_val_accuracy"] = result.history.best_val_accuracy;
  ev["seed"] = tc.seed;
  write_json(out / "eval.json", ev);
  analysis::write_confusion_csv(out / "confusion.csv", test.confusion);
  ctx.log(fmt::format("test accuracy {:.4f} ({} / {})", test.accuracy, test.correct, test.total));

  m.extra["train_seed"] = tc.seed;
  m.extra["variant_digest"] = data.variant.digest;
  finish(ctx, out, std::move(m));
  return 0;
}

int run_eval(Context& ctx, const EvalArgs& a) {
  const fs::path out = resolve_out(ctx, a.out);
  const auto split = dataset::split_from_string(a.split);
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  if (!ckpt.spec.is_classifier()) throw Error("eval: checkpoint does not hold a classifier");
  provenance::prepare_output_dir(out, ctx.force);
  auto m = ctx.manifest();
  record_dataset(ctx, m);
  provenance::record_input(m, a.checkpoint);

  const PreparedData data = prepare_data(ctx, ckpt.spec.kind);
  const auto& stream = data.inputs.get(split);
  if (stream.size() == 0) throw Error(fmt::format("eval: the {} split is empty", a.split));
  const Size2 input = stream.samples().front().clip.frame_size();
  if (input != Size2{ckpt.spec.height, ckpt.spec.width})
    throw Error(fmt::format("eval: checkpoint expects {}x{} clips, the configured data gives {}x{}", ckpt.spec.height,
                            ckpt.spec.width, input.height, input.width));

  const auto result = training::evaluate_checkpoint(ckpt, stream);
  json ev = training::eval_to_json(result);
  ev["split"] = a.split;
  write_json(out / "eval.json", ev);
  analysis::write_confusion_csv(out / "confusion.csv", result.confusion);
  write_json(out / "attribution.json", attribution_json(analysis::error_attribution(result.confusion)));

  if (ctx.cfg.output.emit_panels) {
    fs::create_directories(out / "panels");
    const auto n = static_cast<std::size_t>(std::max(1, ctx.cfg.output.panel_clips));
    std::vector<const VideoClip*> first, wrong;
    for (std::size_t i = 0; i < stream.size(); ++i) {
      const auto& s = stream.samples()[i];
      if (first.size() < n) first.push_back(&s.clip);
      if (wrong.size() < n && result.predictions[i] != s.clip.label.value_or(-1)) wrong.push_back(&s.clip);
    }
    experiment::write_panel(out / "panels" / "clips.png", first);
    if (!wrong.empty()) experiment::write_panel(out / "panels" / "misclassified.png", wrong);
  }
  ctx.log(fmt::format("{} accuracy {:.4f} ({} / {})", a.split, result.accuracy, result.correct, result.total));
  finish(ctx, out, std::move(m));
  return 0;
}

int run_grid(Context& ctx, const GridArgs& a) {
  const fs::path out = resolve_out(ctx, a.out);
  provenance::prepare_output_dir(out, ctx.force);
  auto m = ctx.manifest();
  record_dataset(ctx, m);

  experiment::GridOptions options;
  options.out_dir = out;
  options.parallel = ctx.cfg.grid.parallel;
  options.log = [&ctx](const std::string& s) { ctx.log(s); };
  const auto report = experiment::run_experiment_grid(ctx.cfg, options);
  experiment::write_report(out, report);

  if (!ctx.quiet) {
    std::printf("%-24s %-10s %12s %10s\n", "cell", "input", "valid_pixels", "test_acc");
    for (const auto& r : report.rows)
      std::printf("%-24s %-10s %12ld %10.4f\n", r.spec.name.c_str(),
                  fmt::format("{}x{}", r.input.width, r.input.height).c_str(), r.valid_pixels, r.test.accuracy);
  }
  finish(ctx, out, std::move(m));
  return 0;
}

namespace {

// Embedding files key images by sequence id; the class comes from the first
// path component of the id.
std::vector<analysis::AnalysisImage> images_from_table(const analysis::FileEmbeddingBackend& backend) {
  std::vector<analysis::AnalysisImage> images;
  for (const auto& [id, vec] : backend.table()) {
    const auto slash = id.find('/');
    const int cls = dataset::parse_class_dir(id.substr(0, slash));
    if (cls < 0) throw Error(fmt::format("embedding id '{}' does not start with a class directory", id));
    images.push_back({id, cls, Plane()});
  }
  return images;
}

std::vector<analysis::AnalysisImage> images_from_dataset(const config::ExperimentConfig& cfg) {
  const auto manifest = experiment::resolve_manifest(cfg);
  const auto policy = dataset::color_policy_from_string(cfg.dataset.color);
  const Size2 geometry{cfg.dataset.height, cfg.dataset.width};
  std::shared_ptr<const optics::LenslessCamera> camera;
  if (cfg.analysis.input == "raw") camera = experiment::make_camera(cfg);
  else if (cfg.analysis.input != "scene") throw Error("analysis.input must be raw or scene");

  std::vector<analysis::AnalysisImage> images;
  for (const auto& seq : manifest.sequences) {
    if (cfg.analysis.slice != "all") {
      const auto it = manifest.split_assignment.find(seq.id);
      if (it == manifest.split_assignment.end() || dataset::to_string(it->second) != cfg.analysis.slice) continue;
    }
    if (cfg.analysis.frame_index >= seq.n_frames())
      throw Error(fmt::format("sequence {} has no frame {}", seq.id, cfg.analysis.frame_index));
    Plane frame = dataset::load_frame(seq.frame_paths[static_cast<std::size_t>(cfg.analysis.frame_index)], policy);
    if (size_of(frame) != geometry) frame = resize_bilinear(frame, geometry);
    if (camera) frame = optics::forward_measure(frame, *camera).pixels;
    images.push_back({seq.id, seq.class_id, std::move(frame)});
  }
  return images;
}

}  // namespace

int run_analyze(Context& ctx, const AnalyzeArgs& a) {
  const auto& cfg = ctx.cfg.analysis;
  const fs::path out = resolve_out(ctx, a.out);
  provenance::prepare_output_dir(out, ctx.force);
  auto m = ctx.manifest();

  std::unique_ptr<analysis::EmbeddingBackend> backend;
  std::vector<analysis::AnalysisImage> images;
  if (!cfg.embeddings.empty()) {
    provenance::record_input(m, cfg.embeddings);
    auto file = std::make_unique<analysis::FileEmbeddingBackend>(analysis::FileEmbeddingBackend::load(cfg.embeddings));
    images = images_from_table(*file);
    backend = std::move(file);
  } else if (!cfg.checkpoint.empty()) {
    provenance::record_input(m, cfg.checkpoint);
    record_dataset(ctx, m);
    backend = std::make_unique<analysis::CheckpointEmbeddingBackend>(load_checkpoint(cfg.checkpoint), cfg.grid);
    images = images_from_dataset(ctx.cfg);
  } else {
    throw Error("analyze needs analysis.embeddings or analysis.checkpoint");
  }
  ctx.log(fmt::format("embedding {} images with {} ({}-d)", images.size(), backend->name(), backend->dim()));

  const auto by_class = analysis::embed_by_class(images, *backend);
  const auto row = analysis::pertinence_counts(by_class, cfg.evaluated_class, cfg.candidate_classes);
  analysis::write_pertinence_csv(out / "pertinence.csv", {row});

  const auto sim = analysis::class_similarity_matrix(by_class);
  std::vector<int> classes;
  for (const auto& [c, v] : by_class) classes.push_back(c);
  {
    std::ofstream csv(out / "similarity.csv");
    csv << "class";
    for (int c : classes) csv << ",class_" << c;
    csv << '\n';
    for (std::size_t i = 0; i < classes.size(); ++i) {
      csv << "class_" << classes[i];
      for (double v : sim[i]) csv << fmt::format(",{:.9g}", v);
      csv << '\n';
    }
  }

  json report = {{"backend", backend->name()},
                 {"dim", backend->dim()},
                 {"images", images.size()},
                 {"classes", classes},
                 {"similarity", sim},
                 {"pertinence",
                  {{"evaluated_class", row.evaluated_class},
                   {"candidates", row.candidates},
                   {"counts", row.counts},
                   {"total", row.total()}}}};
  if (!a.eval_json.empty()) {
    provenance::record_input(m, a.eval_json);
    const json ev = read_json(a.eval_json);
    if (!ev.contains("confusion")) throw Error(a.eval_json + ": no confusion matrix");
    const auto attr = analysis::error_attribution(ev.at("confusion").get<std::vector<std::vector<long>>>());
    report["attribution"] = attribution_json(attr);
  }
  write_json(out / "analysis.json", report);

  if (!ctx.quiet) {
    std::printf("class %d:", row.evaluated_class);
    for (std::size_t i = 0; i < row.candidates.size(); ++i) std::printf(" %d->%ld", row.candidates[i], row.counts[i]);
    std::printf(" (total %ld)\n", row.total());
  }
  finish(ctx, out, std::move(m));
  return 0;
}

int run_describe(Context& ctx, const DescribeArgs& a) {
  const auto kind = models::model_kind_from_string(a.kind);
  const auto defaults = models::ModelSpec::defaults(kind);
  const auto spec = ctx.cfg.model_spec(kind, {a.height.value_or(defaults.height), a.width.value_or(defaults.width)});
  spec.validate();
  const std::string table = models::format_table(models::describe_spec(spec));
  std::fputs(table.c_str(), stdout);
  if (!a.out.empty()) {
    const fs::path out(a.out);
    provenance::prepare_output_dir(out, ctx.force);
    std::ofstream(out / "table.txt") << table;
    auto m = ctx.manifest();
    json j;
    models::to_json(j, spec);
    m.extra["spec"] = j;
    finish(ctx, out, std::move(m));
  }
  return 0;
}

}  // namespace lgr::cli
