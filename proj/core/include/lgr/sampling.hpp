#pragma once

#include "lgr/clip.hpp"
#include "lgr/image.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace lgr::sampling {

enum class Method { none, resize, uniform, random, erase };
const char* to_string(Method m);
Method method_from_string(const std::string& s);

struct SampleSpec {
  Method method = Method::none;
  Size2 target{75, 100};  // height, width
  double keep_fraction = 1.0;  // erase only
  std::uint64_t seed = 0;

  // Number of values that survive down-sampling (retained positions for erase).
  long valid_pixels() const;
  friend bool operator==(const SampleSpec&, const SampleSpec&) = default;
};

void to_json(nlohmann::json& j, const SampleSpec& s);
void from_json(const nlohmann::json& j, SampleSpec& s);

struct Coord {
  int row = 0;
  int col = 0;
  friend bool operator==(const Coord&, const Coord&) = default;
  friend auto operator<=>(const Coord&, const Coord&) = default;
};

// Index map of one experiment. For uniform and random, entry k gives the
// source pixel that lands at row-major destination k of the target grid. For
// erase, entries are the retained positions (sorted) on the resized grid.
// Resize and none carry no index map.
struct SamplingMask {
  SampleSpec spec;
  Size2 source;
  std::vector<Coord> indices;

  Size2 output_size() const;
  friend bool operator==(const SamplingMask&, const SamplingMask&) = default;
};

nlohmann::json mask_to_json(const SamplingMask& mask);

// Uniform: centered (step*target) window, step = min(W/tw, H/th), sampled
// every step pixels. Random: target-area distinct source pixels arranged by
// a seeded permutation. Erase: round(keep_fraction * area) retained
// positions chosen without replacement on the resized grid.
SamplingMask make_mask(const SampleSpec& spec, Size2 source = {240, 320});

Plane downsample_frame(const Plane& frame, const SamplingMask& mask);
Plane downsample_frame(const Plane& frame, const SampleSpec& spec);

// One mask per call, shared by every frame.
VideoClip downsample_clip(const VideoClip& clip, const SamplingMask& mask);
VideoClip downsample_clip(const VideoClip& clip, const SampleSpec& spec);

}  // namespace lgr::sampling
