#include "lgr/experiment.hpp"

#include "lgr/error.hpp"
#include "lgr/provenance.hpp"
#include "lgr/recon.hpp"
#include "lgr/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

namespace lgr::experiment {

namespace fs = std::filesystem;
using nlohmann::json;
using training::MemoryStream;
using training::Sample;

const char* to_string(Variant v) {
  switch (v) {
    case Variant::original: return "original";
    case Variant::admm: return "admm";
    case Variant::unet: return "unet";
    case Variant::lensless: return "lensless";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  for (Variant v : {Variant::original, Variant::admm, Variant::unet, Variant::lensless})
    if (s == to_string(v)) return v;
  throw Error("unresolved dataset variant: " + s);
}

MemoryStream& SplitStreams::get(dataset::Split s) {
  return s == dataset::Split::train ? train : s == dataset::Split::val ? val : test;
}

const MemoryStream& SplitStreams::get(dataset::Split s) const {
  return s == dataset::Split::train ? train : s == dataset::Split::val ? val : test;
}

namespace {

constexpr dataset::Split kSplits[] = {dataset::Split::train, dataset::Split::val, dataset::Split::test};

void say(const Log& log, const std::string& msg) {
  if (log) log(msg);
}

SplitStreams map_streams(const SplitStreams& in, const std::function<Sample(const Sample&)>& fn) {
  SplitStreams out;
  for (auto s : kSplits)
    for (const auto& sample : in.get(s).samples()) out.get(s).push_back(fn(sample));
  return out;
}

}  // namespace

// --- data -------------------------------------------------------------------------

dataset::DatasetManifest resolve_manifest(const config::ExperimentConfig& cfg) {
  dataset::DatasetManifest m;
  if (!cfg.dataset.manifest.empty()) {
    m = dataset::load_manifest(cfg.dataset.manifest);
  } else if (!cfg.dataset.root.empty()) {
    m = dataset::scan_dataset(cfg.dataset.root, dataset::layout_from_string(cfg.dataset.layout));
  } else {
    throw Error("no dataset: set dataset.root or dataset.manifest");
  }
  if (m.split_assignment.empty())
    m = dataset::split_dataset(std::move(m), cfg.dataset.test_fraction, cfg.dataset.val_fraction,
                               derive_seed(cfg.seed, "split"));
  return m;
}

SceneData load_scene_data(const config::ExperimentConfig& cfg, const Log& log) {
  SceneData data;
  data.geometry = {cfg.dataset.height, cfg.dataset.width};
  data.manifest = resolve_manifest(cfg);

  const auto policy = dataset::color_policy_from_string(cfg.dataset.color);
  const std::uint64_t sub_seed = derive_seed(cfg.seed, "subvideo");
  for (auto split : kSplits) {
    for (const dataset::GestureSequence* seq : data.manifest.in_split(split)) {
      const auto subs = dataset::extract_subvideos(*seq, kClipLength, cfg.dataset.max_subvideos, sub_seed);
      for (std::size_t j = 0; j < subs.size(); ++j) {
        Sample s;
        s.clip = dataset::to_clip(subs[j], *seq, policy, data.geometry);
        s.illumination = seq->illumination_id;
        s.source_id = fmt::format("{}#{}", seq->id, j);
        data.streams.get(split).push_back(std::move(s));
      }
    }
    say(log, fmt::format("{}: {} clips", dataset::to_string(split), data.streams.get(split).size()));
  }
  return data;
}

std::shared_ptr<const optics::LenslessCamera> make_camera(const config::ExperimentConfig& cfg) {
  const Size2 scene{cfg.dataset.height, cfg.dataset.width};
  const auto& o = cfg.optics;
  optics::PointSpreadFunction psf =
      !o.psf.empty() ? optics::load_psf(o.psf)
                     : optics::synthesize_caustic_psf({o.psf_height > 0 ? o.psf_height : scene.height,
                                                       o.psf_width > 0 ? o.psf_width : scene.width},
                                                      derive_seed(cfg.seed, "psf"), o.psf_points, o.psf_blur);
  const auto geometry =
      optics::SensorGeometry::centered(scene, psf.size(), {o.sensor_h, o.sensor_w}, {o.pad_h, o.pad_w});
  return std::make_shared<const optics::LenslessCamera>(geometry, std::move(psf));
}

// --- sample container ----------------------------------------------------------------

namespace {
constexpr char kSampleMagic[8] = {'L', 'G', 'R', 'S', 'M', 'P', 'L', '1'};
static_assert(std::endian::native == std::endian::little, "sample files are little-endian");
}  // namespace

void save_samples(const fs::path& path, const MemoryStream& stream) {
  json entries = json::array();
  for (const auto& s : stream.samples()) {
    const Size2 sz = s.clip.frame_size();
    entries.push_back({{"source_id", s.source_id},
                       {"illumination", s.illumination},
                       {"label", s.clip.label ? json(*s.clip.label) : json(nullptr)},
                       {"kind", lgr::to_string(s.clip.kind)},
                       {"frames", s.clip.length()},
                       {"height", sz.height},
                       {"width", sz.width}});
  }
  const std::string header = json{{"samples", entries}}.dump();
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(kSampleMagic, sizeof kSampleMagic);
    const std::uint64_t n = header.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(header.data(), static_cast<std::streamsize>(n));
    for (const auto& s : stream.samples())
      for (const Plane& f : s.clip.frames)
        out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(double)));
    if (!out) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

MemoryStream load_samples(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  char magic[8];
  std::uint64_t n = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!in || std::memcmp(magic, kSampleMagic, sizeof magic) != 0) throw Error("not a sample file: " + path.string());
  std::string header(n, '\0');
  in.read(header.data(), static_cast<std::streamsize>(n));
  const json h = json::parse(header);
  MemoryStream out;
  for (const auto& e : h.at("samples")) {
    Sample s;
    s.source_id = e.at("source_id").get<std::string>();
    s.illumination = e.at("illumination").get<int>();
    if (!e.at("label").is_null()) s.clip.label = e.at("label").get<int>();
    s.clip.kind = clip_kind_from_string(e.at("kind").get<std::string>());
    const int frames = e.at("frames").get<int>(), hh = e.at("height").get<int>(), ww = e.at("width").get<int>();
    for (int f = 0; f < frames; ++f) {
      Plane p(hh, ww);
      in.read(reinterpret_cast<char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
      s.clip.frames.push_back(std::move(p));
    }
    out.push_back(std::move(s));
  }
  if (!in) throw Error("truncated sample file: " + path.string());
  return out;
}

// --- variants ----------------------------------------------------------------------

namespace {

std::string variant_digest(const config::ExperimentConfig& cfg, const SceneData& scenes, Variant v) {
  const json full = config::to_json(cfg);
  json key = {{"format", 1},
              {"variant", to_string(v)},
              {"seed", cfg.seed},
              {"dataset", full.at("dataset")},
              {"optics", full.at("optics")}};
  key["dataset"].erase("variant");
  if (v == Variant::admm || v == Variant::unet) key["recon"] = full.at("recon");
  if (v == Variant::unet) {
    key["model"] = full.at("model");
    key["training"] = full.at("training");
  }
  json ids = json::array();
  for (const auto& s : scenes.manifest.sequences)
    ids.push_back({s.id, s.n_frames(), dataset::to_string(scenes.manifest.split_assignment.at(s.id))});
  key["sequences"] = ids;
  return provenance::sha256_hex(key.dump());
}

std::vector<training::FramePair> restorer_pairs(const MemoryStream& raw, const MemoryStream& scene, int count,
                                                std::uint64_t seed) {
  std::vector<std::pair<std::size_t, int>> slots;
  for (std::size_t i = 0; i < raw.size(); ++i)
    for (int f = 0; f < raw.samples()[i].clip.length(); ++f) slots.emplace_back(i, f);
  Rng rng(seed);
  rng.shuffle(slots);
  slots.resize(std::min<std::size_t>(slots.size(), static_cast<std::size_t>(count)));
  std::vector<training::FramePair> pairs;
  for (const auto& [i, f] : slots)
    pairs.push_back({raw.samples()[i].clip.frames[static_cast<std::size_t>(f)],
                     scene.samples()[i].clip.frames[static_cast<std::size_t>(f)]});
  return pairs;
}

}  // namespace

VariantData build_variant(const config::ExperimentConfig& cfg, const SceneData& scenes,
                          const optics::LenslessCamera& camera, Variant variant, const Log& log) {
  VariantData out;
  out.variant = variant;
  out.digest = variant_digest(cfg, scenes, variant);
  if (variant == Variant::unet && camera.geometry().sensor != camera.geometry().scene)
    throw Error("incompatible geometry: the U-Net variant needs sensor size equal to scene size");

  const fs::path cache = cfg.cache_dir();
  const fs::path base = cache.empty() ? fs::path() : cache / out.digest.substr(0, 24);
  if (!cache.empty() && fs::exists(base / "test.smp")) {
    say(log, fmt::format("{}: loading cached clips from {}", to_string(variant), base.string()));
    for (auto s : kSplits) out.streams.get(s) = load_samples(base / fmt::format("{}.smp", dataset::to_string(s)));
    if (fs::exists(base / "restorer.ckpt")) out.restorer = load_checkpoint(base / "restorer.ckpt");
    return out;
  }

  if (variant == Variant::original) {
    out.streams = scenes.streams;
  } else {
    say(log, fmt::format("{}: simulating raw clips", to_string(variant)));
    const optics::NoiseSpec noise = cfg.noise_spec();
    SplitStreams raw = map_streams(scenes.streams, [&](const Sample& s) {
      Sample r = s;
      optics::NoiseSpec n = noise;
      n.seed = derive_seed(noise.seed, s.source_id);
      r.clip = optics::simulate_video(s.clip, camera, n);
      return r;
    });
    if (variant == Variant::lensless) {
      out.streams = std::move(raw);
    } else if (variant == Variant::admm) {
      const recon::AdmmParams params = cfg.admm_params();
      say(log, "admm: reconstructing clips");
      out.streams = map_streams(raw, [&](const Sample& s) {
        Sample r = s;
        r.clip = recon::reconstruct_clip(s.clip, camera, params);
        return r;
      });
    } else {
      const auto pairs = restorer_pairs(raw.train, scenes.streams.train, cfg.recon.restorer_frames,
                                        derive_seed(cfg.seed, "restorer/pairs"));
      training::TrainConfig tc = cfg.train_config("restorer");
      tc.epochs = cfg.recon.restorer_epochs;
      tc.batch_size = cfg.recon.restorer_batch;
      tc.lr_start = cfg.recon.restorer_lr_start;
      tc.lr_end = cfg.recon.restorer_lr_end;
      tc.max_steps = 0;
      say(log, fmt::format("unet: training restorer on {} frame pairs", pairs.size()));
      const auto spec = cfg.model_spec(models::ModelKind::unet_restorer, scenes.geometry);
      const auto trained = training::train_restorer(spec, pairs, tc);
      auto model = trained.model.instantiate();
      const auto norm = training::normalizer_of(trained.model);
      out.restorer = trained.model;
      say(log, "unet: restoring clips");
      out.streams = map_streams(raw, [&](const Sample& s) {
        Sample r = s;
        r.clip = training::restore_clip(*model, s.clip, norm);
        return r;
      });
    }
  }

  if (!cache.empty()) {
    fs::create_directories(base);
    if (out.restorer) save_checkpoint(base / "restorer.ckpt", *out.restorer);
    // test.smp is written last and marks a complete entry.
    for (auto s : {dataset::Split::train, dataset::Split::val, dataset::Split::test})
      save_samples(base / fmt::format("{}.smp", dataset::to_string(s)), out.streams.get(s));
  }
  return out;
}

// --- sampling and geometry ------------------------------------------------------------

Size2 classifier_geometry(Size2 size, const models::ModelSpec& spec) {
  const int f = spec.kind == models::ModelKind::raw3dnet ? 1 << (spec.sfe_widths.size() - 1) : 1;
  auto fit = [f](int v) {
    v = std::max(v, 16);
    return (v + f - 1) / f * f;
  };
  return {fit(size.height), fit(size.width)};
}

VideoClip pad_clip(const VideoClip& clip, Size2 target) {
  const Size2 s = clip.frame_size();
  if (s == target) return clip;
  if (s.height > target.height || s.width > target.width) throw Error("pad_clip: target is smaller than the clip");
  VideoClip out = clip;
  for (Plane& f : out.frames) {
    Plane p = Plane::Zero(target.height, target.width);
    p.topLeftCorner(s.height, s.width) = f;
    f = std::move(p);
  }
  return out;
}

SplitStreams apply_sampling(const SplitStreams& in, const sampling::SampleSpec& spec, const models::ModelSpec& proto) {
  if (in.train.size() == 0) throw Error("apply_sampling: empty training stream");
  const Size2 source = in.train.samples().front().clip.frame_size();
  const sampling::SamplingMask mask = sampling::make_mask(spec, source);
  const Size2 padded = classifier_geometry(mask.output_size(), proto);
  return map_streams(in, [&](const Sample& s) {
    Sample r = s;
    r.clip = pad_clip(sampling::downsample_clip(s.clip, mask), padded);
    return r;
  });
}

// --- cells ----------------------------------------------------------------------------

std::vector<CellSpec> variant_cells() {
  using models::ModelKind;
  return {
      {"original_resnet3d", "Original video | 3D-ResNet", Variant::original, ModelKind::resnet3d, {}},
      {"admm_resnet3d", "ADMM-reconstructed video | 3D-ResNet", Variant::admm, ModelKind::resnet3d, {}},
      {"unet_resnet3d", "U-Net-reconstructed video | 3D-ResNet", Variant::unet, ModelKind::resnet3d, {}},
      {"lensless_resnet3d", "Lensless video | 3D-ResNet", Variant::lensless, ModelKind::resnet3d, {}},
      {"lensless_raw3dnet", "Lensless video | Raw3dNet", Variant::lensless, ModelKind::raw3dnet, {}},
  };
}

std::vector<CellSpec> sampling_cells(Size2 source, std::uint64_t seed) {
  using sampling::Method;
  auto scaled = [&](int h, int w) {
    return Size2{std::max(1, static_cast<int>(std::lround(h * source.height / 240.0))),
                 std::max(1, static_cast<int>(std::lround(w * source.width / 320.0)))};
  };
  struct Row {
    const char* name;
    const char* label;
    Method method;
    int h, w;
    double keep;
  };
  const Row rows[] = {
      {"resize_100x75", "(100,75) Resize", Method::resize, 75, 100, 1.0},
      {"uniform_100x75", "(100,75) Uniform sample", Method::uniform, 75, 100, 1.0},
      {"random_100x75", "(100,75) Random sample", Method::random, 75, 100, 1.0},
      {"erase_200x150", "(200,150) Erase (25% reserved)", Method::erase, 150, 200, 0.25},
      {"resize_50x37", "(50,37) Resize", Method::resize, 37, 50, 1.0},
  };
  std::vector<CellSpec> out;
  for (const Row& r : rows) {
    sampling::SampleSpec s;
    s.method = r.method;
    s.target = scaled(r.h, r.w);
    s.keep_fraction = r.keep;
    s.seed = derive_seed(seed, "sampling");
    out.push_back({r.name, r.label, Variant::lensless, models::ModelKind::raw3dnet, s});
  }
  return out;
}

std::vector<CellSpec> select_cells(const config::ExperimentConfig& cfg, Size2 source) {
  const auto all = cfg.grid.table == "sampling" ? sampling_cells(source, cfg.seed) : variant_cells();
  if (cfg.grid.cells.empty()) return all;
  std::vector<CellSpec> out;
  for (const auto& name : cfg.grid.cells) {
    const auto it = std::find_if(all.begin(), all.end(), [&](const CellSpec& c) { return c.name == name; });
    if (it == all.end()) {
      std::string known;
      for (const auto& c : all) known += " " + c.name;
      throw Error(fmt::format("unknown grid cell '{}' for {}; known:{}", name, cfg.grid.table, known));
    }
    out.push_back(*it);
  }
  return out;
}

// --- report ---------------------------------------------------------------------------

json report_to_json(const ExperimentReport& r) {
  json rows = json::array();
  for (const auto& c : r.rows) {
    json row = {{"name", c.spec.name},
                {"label", c.spec.label},
                {"variant", to_string(c.spec.variant)},
                {"model", models::to_string(c.spec.model)},
                {"sampling", c.spec.sampling ? json(*c.spec.sampling) : json(nullptr)},
                {"valid_pixels", c.valid_pixels},
                {"input", {{"height", c.input.height}, {"width", c.input.width}}},
                {"seed", c.seed},
                {"best_epoch", c.best_epoch},
                {"best_val_accuracy", c.best_val_accuracy},
                {"accuracy", c.test.accuracy},
                {"test", training::eval_to_json(c.test)},
                {"train_clips", c.train_clips},
                {"val_clips", c.val_clips},
                {"wall_seconds", c.wall_seconds},
                {"checkpoint", c.checkpoint}};
    rows.push_back(std::move(row));
  }
  return {{"table", r.table}, {"seed", r.seed}, {"config", r.config}, {"rows", rows}};
}

void write_report(const fs::path& dir, const ExperimentReport& r) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "report.json");
    if (!out) throw Error("cannot write report in " + dir.string());
    out << report_to_json(r).dump(2) << "\n";
  }
  std::ofstream csv(dir / "report.csv");
  csv << "name,label,variant,model,method,valid_pixels,input_h,input_w,seed,best_epoch,val_accuracy,"
         "test_accuracy,test_correct,test_total,wall_seconds\n";
  for (const auto& c : r.rows)
    csv << fmt::format("{},\"{}\",{},{},{},{},{},{},{},{},{:.6f},{:.6f},{},{},{:.3f}\n", c.spec.name, c.spec.label,
                       to_string(c.spec.variant), models::to_string(c.spec.model),
                       c.spec.sampling ? sampling::to_string(c.spec.sampling->method) : "none", c.valid_pixels,
                       c.input.height, c.input.width, c.seed, c.best_epoch, c.best_val_accuracy, c.test.accuracy,
                       c.test.correct, c.test.total, c.wall_seconds);
}

// --- grid -----------------------------------------------------------------------------

SplitStreams classifier_inputs(const config::ExperimentConfig& cfg, const SplitStreams& data, models::ModelKind kind,
                               const std::optional<sampling::SampleSpec>& spec, const std::string& name) {
  if (data.train.size() == 0) throw Error("classifier_inputs: empty training stream");
  const Size2 source = data.train.samples().front().clip.frame_size();
  const models::ModelSpec proto = cfg.model_spec(kind, source);
  if (spec && spec->method != sampling::Method::none) return apply_sampling(data, *spec, proto);
  const Size2 g = classifier_geometry(source, proto);
  if (g != source)
    throw Error(fmt::format("incompatible geometry for {}: {}x{} clips, classifier needs {}x{}", name, source.height,
                            source.width, g.height, g.width));
  return data;
}

namespace {

CellResult run_cell(const config::ExperimentConfig& cfg, const CellSpec& cell, const SplitStreams& data,
                    const GridOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  CellResult res;
  res.spec = cell;
  const Size2 source = data.train.samples().front().clip.frame_size();
  res.valid_pixels = cell.sampling ? cell.sampling->valid_pixels() : static_cast<long>(source.height) * source.width;
  const SplitStreams prepared = classifier_inputs(cfg, data, cell.model, cell.sampling, cell.name);
  const SplitStreams* use = &prepared;
  res.input = use->train.samples().front().clip.frame_size();
  const models::ModelSpec spec = cfg.model_spec(cell.model, res.input);
  const training::TrainConfig tc = cfg.train_config("cell/" + cell.name);
  res.seed = tc.seed;
  res.train_clips = static_cast<long>(use->train.size());
  res.val_clips = static_cast<long>(use->val.size());

  const training::TrainResult trained = training::train_classifier(spec, use->train, use->val, tc);
  res.best_epoch = trained.history.best_epoch;
  res.best_val_accuracy = trained.history.best_val_accuracy;
  res.test = training::evaluate_checkpoint(trained.best, use->test);
  if (!options.out_dir.empty()) {
    const fs::path dir = options.out_dir / "cells" / cell.name;
    fs::create_directories(dir);
    save_checkpoint(dir / "best.ckpt", trained.best);
    training::write_history_csv(dir / "history.csv", trained.history);
    res.checkpoint = (fs::path("cells") / cell.name / "best.ckpt").generic_string();
  }
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace

ExperimentReport run_experiment_grid(const config::ExperimentConfig& cfg, const GridOptions& options) {
  cfg.validate();
  ExperimentReport report;
  report.table = cfg.grid.table;
  report.seed = cfg.seed;
  report.config = config::to_json(cfg);

  const SceneData scenes = load_scene_data(cfg, options.log);
  if (scenes.streams.train.size() == 0 || scenes.streams.val.size() == 0 || scenes.streams.test.size() == 0)
    throw Error("every split needs at least one clip");
  const auto camera = make_camera(cfg);
  const auto cells = select_cells(cfg, camera->geometry().sensor);

  std::map<Variant, VariantData> variants;
  for (const auto& c : cells)
    if (!variants.count(c.variant)) variants.emplace(c.variant, build_variant(cfg, scenes, *camera, c.variant, options.log));

  report.rows.resize(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        say(options.log, fmt::format("cell {}: training", cells[i].name));
        report.rows[i] = run_cell(cfg, cells[i], variants.at(cells[i].variant).streams, options);
        say(options.log, fmt::format("cell {}: test accuracy {:.4f}", cells[i].name, report.rows[i].test.accuracy));
      } catch (...) {
        std::lock_guard lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min(options.parallel, static_cast<int>(cells.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  return report;
}

// --- panels ---------------------------------------------------------------------------

void write_panel(const fs::path& path, const std::vector<const VideoClip*>& clips) {
  if (clips.empty()) throw Error("write_panel: no clips");
  const Size2 s = clips.front()->frame_size();
  int cols = 0;
  for (const auto* c : clips) {
    if (c->frame_size() != s) throw Error("write_panel: clips differ in frame size");
    cols = std::max(cols, c->length());
  }
  const int gap = 2;
  const int rows = static_cast<int>(clips.size());
  Plane canvas = Plane::Ones(rows * s.height + (rows + 1) * gap, cols * s.width + (cols + 1) * gap);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < clips[static_cast<std::size_t>(r)]->length(); ++c) {
      const Plane& f = clips[static_cast<std::size_t>(r)]->frames[static_cast<std::size_t>(c)];
      const double lo = f.minCoeff(), hi = f.maxCoeff();
      const Plane scaled = hi > lo ? Plane((f - lo) / (hi - lo)) : Plane(Plane::Zero(s.height, s.width));
      canvas.block(gap + r * (s.height + gap), gap + c * (s.width + gap), s.height, s.width) = scaled;
    }
  write_image(path, canvas, PixelFormat::png8);
}

}  // namespace lgr::experiment
