#include "lgr/clip.hpp"

#include "lgr/error.hpp"

#include <fmt/format.h>

namespace lgr {

const char* to_string(ClipKind kind) {
  switch (kind) {
    case ClipKind::scene: return "scene";
    case ClipKind::raw: return "raw";
    case ClipKind::reconstructed: return "reconstructed";
  }
  return "?";
}

ClipKind clip_kind_from_string(const std::string& s) {
  if (s == "scene") return ClipKind::scene;
  if (s == "raw") return ClipKind::raw;
  if (s == "reconstructed") return ClipKind::reconstructed;
  throw Error("unknown clip kind: " + s);
}

void validate_clip(const VideoClip& clip, std::optional<int> expected_length) {
  if (clip.frames.empty()) throw Error("clip has no frames");
  if (expected_length && clip.length() != *expected_length)
    throw Error(fmt::format("clip length {} != {}", clip.length(), *expected_length));
  const Size2 s = clip.frame_size();
  for (const auto& f : clip.frames) {
    if (size_of(f) != s) throw Error("clip frames differ in size");
    if (!f.allFinite()) throw Error("clip contains non-finite values");
    if (clip.kind == ClipKind::raw) {
      if (f.minCoeff() < 0.0) throw Error("raw clip contains negative values");
    } else if (f.minCoeff() < 0.0 || f.maxCoeff() > 1.0) {
      throw Error("clip values outside [0, 1]");
    }
  }
  if (clip.label && (*clip.label < 0 || *clip.label >= kNumClasses))
    throw Error(fmt::format("clip label {} out of range", *clip.label));
}

}  // namespace lgr
