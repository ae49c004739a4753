#pragma once

#include "lgr/clip.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace lgr::dataset {

inline constexpr int kNumShapes = 3;
inline constexpr int kNumMotions = 3;
inline constexpr int kNumIlluminations = 5;

// Class index is row-major over (shape, motion).
inline constexpr int class_of(int shape, int motion) { return kNumMotions * shape + motion; }
inline constexpr int shape_of(int class_id) { return class_id / kNumMotions; }
inline constexpr int motion_of(int class_id) { return class_id % kNumMotions; }

const char* shape_name(int shape);    // Flat, Spread, V
const char* motion_name(int motion);  // Leftward, Rightward, Contract
std::string class_dir_name(int class_id);
// Class index from a directory name ("Flat_Leftward", "3", "class_3"), or -1.
int parse_class_dir(const std::string& name);

struct GestureSequence {
  std::string id;  // "<class_dir>/<sequence_dir>"
  std::vector<std::filesystem::path> frame_paths;
  int class_id = 0;
  int shape_id = 0;
  int motion_id = 0;
  int illumination_id = 0;

  int n_frames() const { return static_cast<int>(frame_paths.size()); }
};

enum class Split { train, val, test };
const char* to_string(Split s);
Split split_from_string(const std::string& s);

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<GestureSequence> sequences;  // sorted by id
  std::map<std::string, Split> split_assignment;
  std::uint64_t seed = 0;

  const GestureSequence& find(const std::string& id) const;
  std::vector<const GestureSequence*> in_split(Split s) const;
  int num_classes() const;
  int num_illuminations() const;
};

enum class Layout { cambridge, generic };
Layout layout_from_string(const std::string& s);

// Layout: root/<class_dir>/<sequence_dir>/<frames>. Class dirs are either
// "<Shape>_<Motion>" names or integer class indices; the illumination is read
// from a leading "set<k>"/"s<k>"/"illum<k>" token (1-based) of the sequence
// dir name. Under the generic layout a missing illumination token means 0.
DatasetManifest scan_dataset(const std::filesystem::path& root, Layout layout = Layout::cambridge,
                             int min_frames = kClipLength);

// Stratified by class: per class, round(n * test_fraction) sequences go to
// test and round(pool * val_fraction_of_train) of the remainder to val, each
// at least one. Deterministic in (ids, seed).
DatasetManifest split_dataset(DatasetManifest manifest, double test_fraction = 0.20,
                              double val_fraction_of_train = 0.15, std::uint64_t seed = 0);

struct SubVideo {
  std::string parent_id;
  std::vector<int> frame_indices;
  int label = 0;
};

// Stride s = floor(N/L); emits min(s, max_per_sequence) sub-videos. Index i
// of sub-video j is j + i*s plus a seeded jitter in [0, s-1], clamped to
// N - L + i so indices stay strictly increasing and in range.
std::vector<SubVideo> extract_subvideos(const GestureSequence& seq, int length = kClipLength,
                                        int max_per_sequence = 4, std::uint64_t seed = 0);

enum class ColorPolicy { luma, first_channel };
ColorPolicy color_policy_from_string(const std::string& s);

// Decodes one frame to a single channel in [0, 1].
Plane load_frame(const std::filesystem::path& path, ColorPolicy policy = ColorPolicy::luma);

// Decodes, converts, and (if needed) bilinearly resizes the sub-video frames.
VideoClip to_clip(const SubVideo& sub, const GestureSequence& seq, ColorPolicy policy, Size2 target);


}  // namespace lgr::dataset

namespace lgr::dataset {

// JSON manifest {root, seed, sequences:[{id, class, shape, motion,
// illumination, n_frames, split, frames}]}; frame paths are stored relative
// to root.
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::filesystem::path& path);

// Synthetic gesture videos written in the cambridge layout. Each class draws a
// hand-like silhouette (shape) moving along a trajectory (motion) under one of
// five illumination patterns.
struct FixtureSpec {
  std::vector<int> classes = {0, 1, 2, 3, 4, 5, 6, 7, 8};
  int sequences_per_class = 3;
  int min_frames = 8;
  int max_frames = 8;
  Size2 size{48, 64};
  int illuminations = kNumIlluminations;
  std::uint64_t seed = 0;
  // Write zero-byte frame files; enough for scan/split/sub-video accounting.
  bool empty_files = false;
};

void write_gesture_fixture(const std::filesystem::path& root, const FixtureSpec& spec);

// Renders frame t of an n-frame gesture; exposed for tests and the CLI.
Plane render_gesture_frame(int class_id, int illumination, int t, int n, Size2 size, std::uint64_t seed);

}  // namespace lgr::dataset
