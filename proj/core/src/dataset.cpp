#include "lgr/dataset.hpp"

#include "lgr/error.hpp"
#include "lgr/image.hpp"
#include "lgr/rng.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <regex>
#include <set>

namespace fs = std::filesystem;

namespace lgr::dataset {
namespace {

constexpr const char* kShapes[] = {"Flat", "Spread", "V"};
constexpr const char* kMotions[] = {"Leftward", "Rightward", "Contract"};

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

int parse_shape(const std::string& s) {
  const std::string l = lower(s);
  if (l == "flat") return 0;
  if (l == "spread") return 1;
  if (l == "v" || l == "vshape" || l == "v-shape") return 2;
  return -1;
}

int parse_motion(const std::string& s) {
  const std::string l = lower(s);
  if (l == "leftward" || l == "left") return 0;
  if (l == "rightward" || l == "right") return 1;
  if (l == "contract" || l == "contraction") return 2;
  return -1;
}

int parse_class_dir_impl(const std::string& name) {
  static const std::regex numeric(R"(^(?:class)?[_-]?(\d+)$)", std::regex::icase);
  std::smatch m;
  if (std::regex_match(name, m, numeric)) {
    const int c = std::stoi(m[1].str());
    return (c >= 0 && c < kNumClasses) ? c : -1;
  }
  const auto sep = name.find_first_of("_-");
  if (sep == std::string::npos) return -1;
  const int shape = parse_shape(name.substr(0, sep));
  const int motion = parse_motion(name.substr(sep + 1));
  if (shape < 0 || motion < 0) return -1;
  return class_of(shape, motion);
}

int parse_illumination(const std::string& name) {
  static const std::regex token(R"(^(?:set|illumination|illum|light|s)[_-]?(\d+))", std::regex::icase);
  std::smatch m;
  if (!std::regex_search(name, m, token)) return -1;
  const int k = std::stoi(m[1].str());
  return (k >= 1 && k <= kNumIlluminations) ? k - 1 : -1;
}

std::vector<fs::path> sorted_subdirs(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

int parse_class_dir(const std::string& name) { return parse_class_dir_impl(name); }

const char* shape_name(int shape) { return kShapes[shape]; }
const char* motion_name(int motion) { return kMotions[motion]; }
std::string class_dir_name(int class_id) {
  return fmt::format("{}_{}", kShapes[shape_of(class_id)], kMotions[motion_of(class_id)]);
}

const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw Error("unknown split: " + s);
}

Layout layout_from_string(const std::string& s) {
  if (s == "cambridge") return Layout::cambridge;
  if (s == "generic") return Layout::generic;
  throw Error("unknown dataset layout: " + s);
}

ColorPolicy color_policy_from_string(const std::string& s) {
  if (s == "luma") return ColorPolicy::luma;
  if (s == "first-channel" || s == "first_channel") return ColorPolicy::first_channel;
  throw Error("unknown color policy: " + s);
}

const GestureSequence& DatasetManifest::find(const std::string& id) const {
  auto it = std::lower_bound(sequences.begin(), sequences.end(), id,
                             [](const GestureSequence& s, const std::string& key) { return s.id < key; });
  if (it == sequences.end() || it->id != id) throw Error("unknown sequence id: " + id);
  return *it;
}

std::vector<const GestureSequence*> DatasetManifest::in_split(Split s) const {
  std::vector<const GestureSequence*> out;
  for (const auto& seq : sequences) {
    auto it = split_assignment.find(seq.id);
    if (it != split_assignment.end() && it->second == s) out.push_back(&seq);
  }
  return out;
}

int DatasetManifest::num_classes() const {
  std::set<int> c;
  for (const auto& s : sequences) c.insert(s.class_id);
  return static_cast<int>(c.size());
}

int DatasetManifest::num_illuminations() const {
  std::set<int> c;
  for (const auto& s : sequences) c.insert(s.illumination_id);
  return static_cast<int>(c.size());
}

DatasetManifest scan_dataset(const fs::path& root, Layout layout, int min_frames) {
  if (!fs::is_directory(root)) throw Error("dataset root is not a directory: " + root.string());
  DatasetManifest manifest;
  manifest.root = root;

  for (const auto& class_dir : sorted_subdirs(root)) {
    const std::string class_name = class_dir.filename().string();
    const int class_id = parse_class_dir(class_name);
    if (class_id < 0) throw Error("unparseable class label: " + class_name);

    for (const auto& seq_dir : sorted_subdirs(class_dir)) {
      GestureSequence seq;
      seq.id = class_name + "/" + seq_dir.filename().string();
      seq.class_id = class_id;
      seq.shape_id = shape_of(class_id);
      seq.motion_id = motion_of(class_id);
      const int illum = parse_illumination(seq_dir.filename().string());
      if (illum < 0 && layout == Layout::cambridge)
        throw Error("cannot parse illumination from sequence name: " + seq.id);
      seq.illumination_id = std::max(illum, 0);

      for (const auto& e : fs::directory_iterator(seq_dir))
        if (e.is_regular_file() && is_image_file(e.path())) seq.frame_paths.push_back(e.path());
      std::sort(seq.frame_paths.begin(), seq.frame_paths.end());
      if (seq.n_frames() < min_frames)
        throw Error(fmt::format("sequence {} has {} frames, shorter than {}", seq.id, seq.n_frames(), min_frames));
      manifest.sequences.push_back(std::move(seq));
    }
  }
  if (manifest.sequences.empty()) throw Error("no sequences found under " + root.string());
  std::sort(manifest.sequences.begin(), manifest.sequences.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  return manifest;
}

DatasetManifest split_dataset(DatasetManifest manifest, double test_fraction, double val_fraction_of_train,
                              std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw Error("test_fraction must be in (0, 1)");
  if (!(val_fraction_of_train > 0.0 && val_fraction_of_train < 1.0))
    throw Error("val_fraction_of_train must be in (0, 1)");

  std::map<int, std::vector<std::string>> by_class;
  for (const auto& s : manifest.sequences) by_class[s.class_id].push_back(s.id);

  manifest.split_assignment.clear();
  manifest.seed = seed;
  for (auto& [class_id, ids] : by_class) {
    std::sort(ids.begin(), ids.end());
    const auto n = static_cast<long>(ids.size());
    const long n_test = std::max(1L, std::lround(n * test_fraction));
    const long pool = n - n_test;
    const long n_val = std::max(1L, std::lround(pool * val_fraction_of_train));
    if (pool - n_val < 1)
      throw Error(fmt::format("class {} has {} sequences; train/val/test splits need at least 3", class_id, n));

    Rng rng(derive_seed(seed, fmt::format("split/class/{}", class_id)));
    rng.shuffle(ids);
    for (long i = 0; i < n; ++i) {
      const Split s = i < n_test ? Split::test : (i < n_test + n_val ? Split::val : Split::train);
      manifest.split_assignment[ids[static_cast<std::size_t>(i)]] = s;
    }
  }
  return manifest;
}

std::vector<SubVideo> extract_subvideos(const GestureSequence& seq, int length, int max_per_sequence,
                                        std::uint64_t seed) {
  const int n = seq.n_frames();
  if (length < 1) throw Error("sub-video length must be positive");
  if (n < length) throw Error(fmt::format("sequence {} has {} frames, fewer than {}", seq.id, n, length));
  if (max_per_sequence < 1) throw Error("max_per_sequence must be positive");

  const int stride = n / length;
  const int count = std::min(stride, max_per_sequence);
  Rng rng(derive_seed(seed, "subvideo/" + seq.id));

  std::vector<SubVideo> out;
  for (int j = 0; j < count; ++j) {
    SubVideo sub{seq.id, {}, seq.class_id};
    sub.frame_indices.reserve(static_cast<std::size_t>(length));
    for (int i = 0; i < length; ++i) {
      const int base = j + i * stride;
      const int jitter = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(stride)));
      sub.frame_indices.push_back(std::min(base + jitter, n - length + i));
    }
    out.push_back(std::move(sub));
  }
  return out;
}

Plane load_frame(const fs::path& path, ColorPolicy policy) {
  DecodedImage img = read_image(path);
  const double scale = img.max_value;
  Plane out;
  if (img.channels.size() >= 3 && policy == ColorPolicy::luma) {
    out = (0.299 * img.channels[0] + 0.587 * img.channels[1] + 0.114 * img.channels[2]) / scale;
  } else {
    out = img.channels[0] / scale;
  }
  return out.max(0.0).min(1.0);
}

VideoClip to_clip(const SubVideo& sub, const GestureSequence& seq, ColorPolicy policy, Size2 target) {
  VideoClip clip;
  clip.kind = ClipKind::scene;
  clip.label = sub.label;
  Size2 source{};
  for (int idx : sub.frame_indices) {
    if (idx < 0 || idx >= seq.n_frames()) throw Error("sub-video index out of range");
    Plane f = load_frame(seq.frame_paths[static_cast<std::size_t>(idx)], policy);
    if (clip.frames.empty()) {
      source = size_of(f);
    } else if (size_of(f) != source) {
      throw Error("resolution mismatch across frames of " + seq.id);
    }
    if (size_of(f) != target) f = resize_bilinear(f, target);
    clip.frames.push_back(std::move(f));
  }
  return clip;
}

void save_manifest(const fs::path& path, const DatasetManifest& manifest) {
  nlohmann::json seqs = nlohmann::json::array();
  for (const auto& s : manifest.sequences) {
    nlohmann::json frames = nlohmann::json::array();
    for (const auto& p : s.frame_paths) frames.push_back(fs::relative(p, manifest.root).generic_string());
    auto it = manifest.split_assignment.find(s.id);
    seqs.push_back({{"id", s.id},
                    {"class", s.class_id},
                    {"shape", s.shape_id},
                    {"motion", s.motion_id},
                    {"illumination", s.illumination_id},
                    {"n_frames", s.n_frames()},
                    {"split", it == manifest.split_assignment.end() ? nlohmann::json(nullptr) : nlohmann::json(to_string(it->second))},
                    {"frames", frames}});
  }
  nlohmann::json j{{"root", manifest.root.string()}, {"seed", manifest.seed}, {"sequences", seqs}};
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream(path) << j.dump(2) << "\n";
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest: " + path.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error("corrupt manifest: " + path.string());
  DatasetManifest m;
  m.root = j.at("root").get<std::string>();
  m.seed = j.value("seed", std::uint64_t{0});
  for (const auto& s : j.at("sequences")) {
    GestureSequence seq;
    seq.id = s.at("id").get<std::string>();
    seq.class_id = s.at("class").get<int>();
    seq.shape_id = s.at("shape").get<int>();
    seq.motion_id = s.at("motion").get<int>();
    seq.illumination_id = s.at("illumination").get<int>();
    if (seq.class_id != class_of(seq.shape_id, seq.motion_id))
      throw Error("manifest: class does not match shape/motion for " + seq.id);
    for (const auto& f : s.value("frames", nlohmann::json::array())) seq.frame_paths.push_back(m.root / f.get<std::string>());
    if (seq.n_frames() != s.at("n_frames").get<int>()) throw Error("manifest: frame count mismatch for " + seq.id);
    if (!s.at("split").is_null()) m.split_assignment[seq.id] = split_from_string(s.at("split").get<std::string>());
    m.sequences.push_back(std::move(seq));
  }
  std::sort(m.sequences.begin(), m.sequences.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return m;
}

// --- synthetic fixture -----------------------------------------------------

namespace {

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax, vy = by - ay;
  const double t = std::clamp(((px - ax) * vx + (py - ay) * vy) / (vx * vx + vy * vy), 0.0, 1.0);
  const double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

Plane render_gesture_frame(int class_id, int illumination, int t, int n, Size2 size, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "gesture-jitter"));
  const double jx = rng.uniform(-0.05, 0.05);
  const double jy = rng.uniform(-0.05, 0.05);
  const double js = rng.uniform(0.9, 1.1);

  const int shape = shape_of(class_id);
  const int motion = motion_of(class_id);
  const double phase = n > 1 ? static_cast<double>(t) / (n - 1) : 0.0;
  const double unit = std::min(size.height, size.width);

  double cx = 0.5 + jx, cy = 0.55 + jy, scale = js;
  if (motion == 0) cx += 0.2 - 0.4 * phase;
  if (motion == 1) cx += -0.2 + 0.4 * phase;
  if (motion == 2) scale *= 1.0 - 0.45 * phase;
  cx *= size.width;
  cy *= size.height;
  const double palm = 0.16 * unit * scale;
  const double finger_len = 0.28 * unit * scale;
  const double finger_w = 0.045 * unit * scale;

  // Finger segments from the palm centre, angles measured from straight up.
  std::vector<double> angles;
  if (shape == 0) angles = {-0.12, -0.04, 0.04, 0.12};
  if (shape == 1) angles = {-0.9, -0.45, 0.0, 0.45, 0.9};
  if (shape == 2) angles = {-0.35, 0.35};

  const double bx = illumination == 0 ? 1 : illumination == 1 ? -1 : illumination == 2 ? -1 : illumination == 3 ? 1 : 0;
  const double by = illumination == 0 ? -1 : illumination == 1 ? -1 : illumination == 2 ? 1 : illumination == 3 ? 1 : 0;

  Plane frame(size.height, size.width);
  for (int r = 0; r < size.height; ++r) {
    for (int c = 0; c < size.width; ++c) {
      const double x = c + 0.5, y = r + 0.5;
      bool inside;
      if (shape == 0) {
        // Flat hand: a tall rounded slab.
        const double dx = (x - cx) / (0.55 * palm), dy = (y - cy + 0.5 * finger_len) / (palm + 0.6 * finger_len);
        inside = dx * dx + dy * dy <= 1.0;
      } else {
        inside = (x - cx) * (x - cx) + (y - cy) * (y - cy) <= palm * palm;
        for (double a : angles) {
          const double ex = cx + std::sin(a) * (palm + finger_len);
          const double ey = cy - std::cos(a) * (palm + finger_len);
          if (segment_distance(x, y, cx, cy, ex, ey) <= finger_w) inside = true;
        }
      }
      const double gx = (x / size.width - 0.5) * 2.0, gy = (y / size.height - 0.5) * 2.0;
      const double light = illumination == 4 ? 0.85 : 0.55 + 0.35 * (bx * gx + by * gy) / 2.0 + 0.1;
      frame(r, c) = inside ? std::clamp(light, 0.15, 1.0) : 0.04;
    }
  }
  return frame;
}

void write_gesture_fixture(const fs::path& root, const FixtureSpec& spec) {
  if (spec.min_frames < 1 || spec.max_frames < spec.min_frames) throw Error("fixture: bad frame range");
  if (spec.illuminations < 1 || spec.illuminations > kNumIlluminations) throw Error("fixture: bad illumination count");
  fs::create_directories(root);
  Rng rng(derive_seed(spec.seed, "fixture"));
  for (int class_id : spec.classes) {
    if (class_id < 0 || class_id >= kNumClasses) throw Error("fixture: class out of range");
    const fs::path class_dir = root / class_dir_name(class_id);
    for (int j = 0; j < spec.sequences_per_class; ++j) {
      const int illum = j % spec.illuminations;
      const fs::path seq_dir = class_dir / fmt::format("set{}_seq{:03d}", illum + 1, j);
      fs::create_directories(seq_dir);
      const int n = spec.min_frames +
                    static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(spec.max_frames - spec.min_frames + 1)));
      const std::uint64_t seq_seed = derive_seed(spec.seed, fmt::format("{}/{}", class_id, j));
      for (int t = 0; t < n; ++t) {
        const fs::path frame_path = seq_dir / fmt::format("frame_{:04d}.png", t + 1);
        if (spec.empty_files) {
          std::ofstream{frame_path};
        } else {
          write_image(frame_path, render_gesture_frame(class_id, illum, t, n, spec.size, seq_seed), PixelFormat::png8);
        }
      }
    }
  }
}

}  // namespace lgr::dataset
