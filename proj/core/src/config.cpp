#include "lgr/config.hpp"

#include "lgr/error.hpp"
#include "lgr/rng.hpp"

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace lgr::config {

namespace fs = std::filesystem;
using nlohmann::json;

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DatasetSection, root, manifest, layout, color, test_fraction, val_fraction,
                                   max_subvideos, height, width, variant)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(OpticsSection, psf, psf_height, psf_width, psf_points, psf_blur, sensor_h,
                                   sensor_w, pad_h, pad_w, noise_sigma)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SamplingSection, method, target_h, target_w, keep_fraction)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ModelSection, kind, preset, sfe_widths, resnet_widths, unet_widths, stem_kernel)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ReconSection, rho_data, rho_tv, rho_nonneg, tv_weight, max_iters, primal_tol,
                                   dual_tol, adaptive_rho, restorer_epochs, restorer_batch, restorer_frames,
                                   restorer_lr_start, restorer_lr_end)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(AnalysisSection, frame_index, slice, input, evaluated_class, candidate_classes,
                                   embeddings, checkpoint, grid)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(OutputSection, dir, cache_dir, emit_panels, panel_clips)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(GridSection, table, cells, parallel)

namespace {

const std::vector<std::string> kSectionOrder = {"dataset", "optics",   "sampling", "model", "training",
                                                "recon",   "analysis", "output",   "grid"};

// Element types of list fields whose default is empty.
enum class Elem { integer, string };
Elem element_kind(const std::string& path) { return path == "grid.cells" ? Elem::string : Elem::integer; }

std::string kind_name(const json& schema) {
  switch (schema.type()) {
    case json::value_t::boolean: return "boolean";
    case json::value_t::number_integer:
    case json::value_t::number_unsigned: return "integer";
    case json::value_t::number_float: return "number";
    case json::value_t::string: return "string";
    case json::value_t::array: return "list";
    case json::value_t::object: return "mapping";
    default: return "value";
  }
}

json convert_scalar(const YAML::Node& node, const json& schema, const std::string& path) {
  if (!node.IsScalar() && !node.IsNull())
    throw Error(fmt::format("{}: expected a {}", path, kind_name(schema)));
  const std::string text = node.IsNull() ? std::string() : node.Scalar();
  try {
    switch (schema.type()) {
      case json::value_t::boolean: return node.as<bool>();
      case json::value_t::number_unsigned: {
        if (!text.empty() && text.front() == '-') throw YAML::Exception(node.Mark(), "negative");
        return node.as<std::uint64_t>();
      }
      case json::value_t::number_integer: return node.as<long long>();
      case json::value_t::number_float: return node.as<double>();
      case json::value_t::string: return text;
      default: break;
    }
  } catch (const YAML::Exception&) {
  }
  throw Error(fmt::format("{}: expected {}, got '{}'", path, kind_name(schema), text));
}

json convert(const YAML::Node& node, const json& schema, const std::string& path, std::vector<std::string>& errors) {
  if (schema.is_object()) {
    json out = schema;
    if (node.IsNull()) return out;
    if (!node.IsMap()) {
      errors.push_back(fmt::format("{}: expected a mapping", path.empty() ? "<document>" : path));
      return out;
    }
    for (const auto& kv : node) {
      const std::string key = kv.first.as<std::string>();
      const std::string child = path.empty() ? key : path + "." + key;
      if (!schema.contains(key)) {
        errors.push_back(fmt::format("{}: unknown key", child));
        continue;
      }
      out[key] = convert(kv.second, schema.at(key), child, errors);
    }
    return out;
  }
  if (schema.is_array()) {
    json out = json::array();
    if (node.IsNull()) return out;
    if (!node.IsSequence()) {
      errors.push_back(fmt::format("{}: expected a list", path));
      return schema;
    }
    const json elem = !schema.empty() ? schema.front()
                      : element_kind(path) == Elem::string ? json(std::string())
                                                           : json(0LL);
    for (std::size_t i = 0; i < node.size(); ++i) {
      try {
        out.push_back(convert_scalar(node[i], elem, fmt::format("{}[{}]", path, i)));
      } catch (const Error& e) {
        errors.push_back(e.what());
      }
    }
    return out;
  }
  try {
    return convert_scalar(node, schema, path);
  } catch (const Error& e) {
    errors.push_back(e.what());
    return schema;
  }
}

void throw_if(const std::vector<std::string>& errors, const std::string& what) {
  if (errors.empty()) return;
  std::string msg = what;
  for (const auto& e : errors) msg += "\n  " + e;
  throw Error(msg);
}

template <typename T>
bool one_of(const T& v, std::initializer_list<T> options) {
  for (const auto& o : options)
    if (v == o) return true;
  return false;
}

void emit(YAML::Emitter& out, const json& j) {
  switch (j.type()) {
    case json::value_t::object:
      out << YAML::BeginMap;
      for (const auto& [k, v] : j.items()) {
        out << YAML::Key << k << YAML::Value;
        emit(out, v);
      }
      out << YAML::EndMap;
      break;
    case json::value_t::array:
      out << YAML::Flow << YAML::BeginSeq;
      for (const auto& v : j) emit(out, v);
      out << YAML::EndSeq;
      break;
    case json::value_t::string: out << YAML::DoubleQuoted << j.get<std::string>(); break;
    case json::value_t::boolean: out << (j.get<bool>() ? "true" : "false"); break;
    case json::value_t::number_float: out << fmt::format("{}", j.get<double>()); break;
    default: out << j.dump(); break;
  }
}

}  // namespace

json to_json(const ExperimentConfig& c) {
  json training = c.training;
  training.erase("seed");
  return {{"schema_version", c.schema_version}, {"seed", c.seed},         {"dataset", c.dataset},
          {"optics", c.optics},                 {"sampling", c.sampling}, {"model", c.model},
          {"training", training},               {"recon", c.recon},       {"analysis", c.analysis},
          {"output", c.output},                 {"grid", c.grid}};
}

ExperimentConfig from_json(const json& j) {
  ExperimentConfig c;
  c.schema_version = j.at("schema_version").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.dataset = j.at("dataset").get<DatasetSection>();
  c.optics = j.at("optics").get<OpticsSection>();
  c.sampling = j.at("sampling").get<SamplingSection>();
  c.model = j.at("model").get<ModelSection>();
  c.training = j.at("training").get<training::TrainConfig>();
  c.training.seed = 0;
  c.recon = j.at("recon").get<ReconSection>();
  c.analysis = j.at("analysis").get<AnalysisSection>();
  c.output = j.at("output").get<OutputSection>();
  c.grid = j.at("grid").get<GridSection>();
  return c;
}

std::string to_yaml(const ExperimentConfig& c) {
  const json j = to_json(c);
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "schema_version" << YAML::Value << c.schema_version;
  out << YAML::Key << "seed" << YAML::Value << c.seed;
  for (const auto& section : kSectionOrder) {
    out << YAML::Key << section << YAML::Value;
    emit(out, j.at(section));
  }
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw Error("override '" + assignment + "': expected section.key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  const json schema = to_json(ExperimentConfig{});

  std::vector<std::string> keys;
  std::stringstream ss(path);
  for (std::string k; std::getline(ss, k, '.');) keys.push_back(k);
  const json* s = &schema;
  json* d = &doc;
  for (const auto& k : keys) {
    if (!s->is_object() || !s->contains(k)) throw Error(fmt::format("override '{}': unknown key {}", assignment, path));
    s = &s->at(k);
    d = &(*d)[k];
  }
  if (s->is_object()) throw Error(fmt::format("override '{}': {} is a section, not a key", assignment, path));
  YAML::Node node;
  try {
    node = YAML::Load(value);
  } catch (const YAML::Exception& e) {
    throw Error(fmt::format("override '{}': {}", assignment, e.what()));
  }
  // An unquoted string value must stay a string even when YAML reads it as a
  // mapping or list (e.g. "a: b").
  if (s->is_string() && !node.IsScalar() && !node.IsNull()) node = YAML::Node(value);
  std::vector<std::string> errors;
  *d = convert(node, *s, path, errors);
  throw_if(errors, "invalid override:");
}

ExperimentConfig parse_config(const std::string& yaml_text, const std::vector<std::string>& overrides) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw Error(std::string("config is not valid YAML: ") + e.what());
  }
  std::vector<std::string> errors;
  json doc = convert(root, to_json(ExperimentConfig{}), "", errors);
  throw_if(errors, "invalid config:");
  const int version = doc.at("schema_version").get<int>();
  if (version != kSchemaVersion)
    throw Error(fmt::format("invalid config:\n  schema_version: {} is not supported (expected {})", version,
                            kSchemaVersion));
  for (const auto& o : overrides) apply_override(doc, o);
  ExperimentConfig c = from_json(doc);
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), overrides);
}

void save_config(const fs::path& path, const ExperimentConfig& c) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << to_yaml(c);
}

void ExperimentConfig::validate() const {
  std::vector<std::string> e;
  auto require = [&](bool ok, std::string msg) {
    if (!ok) e.push_back(std::move(msg));
  };
  auto existing = [&](const std::string& p, const char* key) {
    if (!p.empty() && !fs::exists(p)) e.push_back(fmt::format("{}: path does not exist: {}", key, p));
  };

  require(schema_version == kSchemaVersion, fmt::format("schema_version: expected {}", kSchemaVersion));

  existing(dataset.root, "dataset.root");
  existing(dataset.manifest, "dataset.manifest");
  require(one_of<std::string>(dataset.layout, {"cambridge", "generic"}), "dataset.layout: cambridge | generic");
  require(one_of<std::string>(dataset.color, {"luma", "first_channel"}), "dataset.color: luma | first_channel");
  require(dataset.test_fraction > 0.0 && dataset.test_fraction < 1.0, "dataset.test_fraction: must be in (0, 1)");
  require(dataset.val_fraction > 0.0 && dataset.val_fraction < 1.0, "dataset.val_fraction: must be in (0, 1)");
  require(dataset.max_subvideos >= 1, "dataset.max_subvideos: must be >= 1");
  require(dataset.height > 0 && dataset.width > 0, "dataset.height/width: must be positive");
  require(one_of<std::string>(dataset.variant, {"original", "admm", "unet", "lensless"}),
          "dataset.variant: original | admm | unet | lensless");

  existing(optics.psf, "optics.psf");
  require(optics.psf_height >= 0 && optics.psf_width >= 0, "optics.psf_height/psf_width: must be >= 0");
  require(optics.psf_points >= 0, "optics.psf_points: must be >= 0");
  require(optics.psf_blur > 0.0, "optics.psf_blur: must be positive");
  require(optics.sensor_h >= 0 && optics.sensor_w >= 0, "optics.sensor_h/sensor_w: must be >= 0");
  require(optics.pad_h >= 0 && optics.pad_w >= 0, "optics.pad_h/pad_w: must be >= 0");
  require(optics.noise_sigma >= 0.0, "optics.noise_sigma: must be >= 0");

  try {
    (void)sampling::method_from_string(sampling.method);
  } catch (const Error& err) {
    e.push_back(std::string("sampling.method: ") + err.what());
  }
  require(sampling.target_h > 0 && sampling.target_w > 0, "sampling.target_h/target_w: must be positive");
  require(sampling.keep_fraction > 0.0 && sampling.keep_fraction <= 1.0, "sampling.keep_fraction: must be in (0, 1]");

  try {
    (void)models::model_kind_from_string(model.kind);
  } catch (const Error& err) {
    e.push_back(std::string("model.kind: ") + err.what());
  }
  require(one_of<std::string>(model.preset, {"full", "reduced"}), "model.preset: full | reduced");
  for (const auto* w : {&model.sfe_widths, &model.resnet_widths, &model.unet_widths})
    for (int x : *w) require(x > 0, "model widths must be positive");
  require(model.stem_kernel >= 0, "model.stem_kernel: must be >= 0");

  try {
    training.validate();
  } catch (const Error& err) {
    e.push_back(err.what());
  }
  try {
    admm_params().validate();
  } catch (const Error& err) {
    e.push_back(std::string("recon: ") + err.what());
  }
  require(recon.restorer_epochs >= 1 && recon.restorer_batch >= 1 && recon.restorer_frames >= 1,
          "recon.restorer_epochs/batch/frames: must be >= 1");
  require(recon.restorer_lr_start >= recon.restorer_lr_end && recon.restorer_lr_end > 0.0,
          "recon: need restorer_lr_start >= restorer_lr_end > 0");

  require(analysis.frame_index >= 0, "analysis.frame_index: must be >= 0");
  require(one_of<std::string>(analysis.slice, {"all", "train", "val", "test"}), "analysis.slice: all | train | val | test");
  require(one_of<std::string>(analysis.input, {"raw", "scene"}), "analysis.input: raw | scene");
  require(analysis.evaluated_class >= 0 && analysis.evaluated_class < kNumClasses, "analysis.evaluated_class: 0..8");
  require(!analysis.candidate_classes.empty(), "analysis.candidate_classes: must not be empty");
  for (int c : analysis.candidate_classes) require(c >= 0 && c < kNumClasses, "analysis.candidate_classes: 0..8");
  require(analysis.grid >= 1, "analysis.grid: must be >= 1");
  existing(analysis.embeddings, "analysis.embeddings");
  existing(analysis.checkpoint, "analysis.checkpoint");

  require(!output.dir.empty(), "output.dir: must not be empty");
  require(output.panel_clips >= 1, "output.panel_clips: must be >= 1");

  require(one_of<std::string>(grid.table, {"variants", "sampling"}), "grid.table: variants | sampling");
  require(grid.parallel >= 1, "grid.parallel: must be >= 1");

  throw_if(e, "invalid config:");
}

models::ModelSpec ExperimentConfig::model_spec(models::ModelKind kind, Size2 geometry) const {
  models::ModelSpec s = model.preset == "reduced" ? models::ModelSpec::reduced(kind, geometry.height, geometry.width)
                                                  : models::ModelSpec::defaults(kind);
  s.kind = kind;
  s.height = geometry.height;
  s.width = geometry.width;
  if (!model.sfe_widths.empty()) s.sfe_widths = model.sfe_widths;
  if (!model.resnet_widths.empty()) s.resnet_widths = model.resnet_widths;
  if (!model.unet_widths.empty()) s.unet_widths = model.unet_widths;
  if (model.stem_kernel > 0) s.stem_kernel = model.stem_kernel;
  return s;
}

training::TrainConfig ExperimentConfig::train_config(std::string_view label) const {
  training::TrainConfig t = training;
  t.seed = derive_seed(seed, label);
  return t;
}

recon::AdmmParams ExperimentConfig::admm_params() const {
  recon::AdmmParams p;
  p.rho_data = recon.rho_data;
  p.rho_tv = recon.rho_tv;
  p.rho_nonneg = recon.rho_nonneg;
  p.tv_weight = recon.tv_weight;
  p.max_iters = recon.max_iters;
  p.primal_tol = recon.primal_tol;
  p.dual_tol = recon.dual_tol;
  p.adaptive_rho = recon.adaptive_rho;
  return p;
}

sampling::SampleSpec ExperimentConfig::sample_spec() const {
  sampling::SampleSpec s;
  s.method = sampling::method_from_string(sampling.method);
  s.target = {sampling.target_h, sampling.target_w};
  s.keep_fraction = sampling.keep_fraction;
  s.seed = derive_seed(seed, "sampling");
  return s;
}

optics::NoiseSpec ExperimentConfig::noise_spec() const {
  if (optics.noise_sigma == 0.0) return optics::NoiseSpec::none();
  return optics::NoiseSpec::gaussian(optics.noise_sigma, derive_seed(seed, "noise"));
}

fs::path ExperimentConfig::cache_dir() const {
  if (!output.cache_dir.empty()) return output.cache_dir;
  if (const char* env = std::getenv("LGR_CACHE_DIR"); env && *env) return env;
  return {};
}

}  // namespace lgr::config
