#include "lgr/sampling.hpp"

#include "lgr/error.hpp"
#include "lgr/rng.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace lgr::sampling {

const char* to_string(Method m) {
  switch (m) {
    case Method::none: return "none";
    case Method::resize: return "resize";
    case Method::uniform: return "uniform";
    case Method::random: return "random";
    case Method::erase: return "erase";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  for (Method m : {Method::none, Method::resize, Method::uniform, Method::random, Method::erase})
    if (s == to_string(m)) return m;
  throw Error("unknown sampling method: " + s);
}

long SampleSpec::valid_pixels() const {
  const long area = static_cast<long>(target.height) * target.width;
  if (method == Method::erase) return std::lround(keep_fraction * static_cast<double>(area));
  return area;
}

void to_json(nlohmann::json& j, const SampleSpec& s) {
  j = {{"method", to_string(s.method)},
       {"target_w", s.target.width},
       {"target_h", s.target.height},
       {"keep_fraction", s.keep_fraction},
       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, SampleSpec& s) {
  s.method = method_from_string(j.at("method").get<std::string>());
  s.target.width = j.value("target_w", 100);
  s.target.height = j.value("target_h", 75);
  s.keep_fraction = j.value("keep_fraction", 1.0);
  s.seed = j.value("seed", std::uint64_t{0});
}

Size2 SamplingMask::output_size() const { return spec.method == Method::none ? source : spec.target; }

nlohmann::json mask_to_json(const SamplingMask& mask) {
  nlohmann::json idx = nlohmann::json::array();
  for (const auto& c : mask.indices) idx.push_back({c.row, c.col});
  return {{"spec", mask.spec},
          {"source_h", mask.source.height},
          {"source_w", mask.source.width},
          {"output_h", mask.output_size().height},
          {"output_w", mask.output_size().width},
          {"indices", idx}};
}

SamplingMask make_mask(const SampleSpec& spec, Size2 source) {
  if (source.height <= 0 || source.width <= 0) throw Error("sampling: source size must be positive");
  SamplingMask mask{spec, source, {}};
  if (spec.method == Method::none) return mask;

  const Size2 t = spec.target;
  if (t.height <= 0 || t.width <= 0) throw Error("sampling: target size must be positive");
  if (t.height > source.height || t.width > source.width)
    throw Error(fmt::format("sampling: target {}x{} larger than source {}x{}", t.width, t.height, source.width,
                            source.height));
  if (spec.method == Method::erase && !(spec.keep_fraction > 0.0 && spec.keep_fraction <= 1.0))
    throw Error("sampling: keep_fraction must be in (0, 1]");

  Rng rng(derive_seed(spec.seed, fmt::format("sampling/{}", to_string(spec.method))));
  switch (spec.method) {
    case Method::none:
    case Method::resize:
      break;
    case Method::uniform: {
      const int step = std::min(source.width / t.width, source.height / t.height);
      const int row0 = (source.height - step * t.height) / 2;
      const int col0 = (source.width - step * t.width) / 2;
      mask.indices.reserve(static_cast<std::size_t>(t.height) * t.width);
      for (int r = 0; r < t.height; ++r)
        for (int c = 0; c < t.width; ++c) mask.indices.push_back({row0 + step * r, col0 + step * c});
      break;
    }
    case Method::random: {
      const auto area = static_cast<std::size_t>(source.height) * source.width;
      const auto keep = static_cast<std::size_t>(t.height) * t.width;
      // Partial Fisher-Yates: the first `keep` entries are a uniform sample.
      std::vector<std::size_t> pool(area);
      for (std::size_t i = 0; i < area; ++i) pool[i] = i;
      for (std::size_t i = 0; i < keep; ++i) std::swap(pool[i], pool[i + rng.uniform_index(area - i)]);
      std::vector<std::size_t> chosen(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep));
      std::sort(chosen.begin(), chosen.end());
      const auto arrangement = rng.permutation(keep);
      mask.indices.reserve(keep);
      for (std::size_t k = 0; k < keep; ++k) {
        const std::size_t flat = chosen[arrangement[k]];
        mask.indices.push_back({static_cast<int>(flat / source.width), static_cast<int>(flat % source.width)});
      }
      break;
    }
    case Method::erase: {
      const auto area = static_cast<std::size_t>(t.height) * t.width;
      const auto keep = static_cast<std::size_t>(spec.valid_pixels());
      std::vector<std::size_t> pool(area);
      for (std::size_t i = 0; i < area; ++i) pool[i] = i;
      for (std::size_t i = 0; i < keep; ++i) std::swap(pool[i], pool[i + rng.uniform_index(area - i)]);
      std::vector<std::size_t> kept(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep));
      std::sort(kept.begin(), kept.end());
      for (std::size_t flat : kept)
        mask.indices.push_back({static_cast<int>(flat / t.width), static_cast<int>(flat % t.width)});
      break;
    }
  }
  return mask;
}

Plane downsample_frame(const Plane& frame, const SamplingMask& mask) {
  if (size_of(frame) != mask.source)
    throw Error(fmt::format("sampling: frame {}x{} does not match source {}x{}", frame.cols(), frame.rows(),
                            mask.source.width, mask.source.height));
  const Size2 t = mask.spec.target;
  switch (mask.spec.method) {
    case Method::none:
      return frame;
    case Method::resize:
      return resize_bilinear(frame, t);
    case Method::uniform:
    case Method::random: {
      Plane out(t.height, t.width);
      for (std::size_t k = 0; k < mask.indices.size(); ++k) out.data()[k] = frame(mask.indices[k].row, mask.indices[k].col);
      return out;
    }
    case Method::erase: {
      const Plane resized = resize_bilinear(frame, t);
      Plane out = Plane::Zero(t.height, t.width);
      for (const auto& c : mask.indices) out(c.row, c.col) = resized(c.row, c.col);
      return out;
    }
  }
  throw Error("sampling: unreachable");
}

Plane downsample_frame(const Plane& frame, const SampleSpec& spec) {
  return downsample_frame(frame, make_mask(spec, size_of(frame)));
}

VideoClip downsample_clip(const VideoClip& clip, const SamplingMask& mask) {
  VideoClip out;
  out.kind = clip.kind;
  out.label = clip.label;
  out.frames.reserve(clip.frames.size());
  for (const auto& f : clip.frames) out.frames.push_back(downsample_frame(f, mask));
  return out;
}

VideoClip downsample_clip(const VideoClip& clip, const SampleSpec& spec) {
  if (clip.frames.empty()) throw Error("sampling: empty clip");
  return downsample_clip(clip, make_mask(spec, clip.frame_size()));
}

}  // namespace lgr::sampling
