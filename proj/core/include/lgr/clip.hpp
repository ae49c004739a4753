#pragma once

#include "lgr/image.hpp"

#include <optional>
#include <string>
#include <vector>

namespace lgr {

inline constexpr int kClipLength = 8;
inline constexpr int kNumClasses = 9;

enum class ClipKind { scene, raw, reconstructed };

const char* to_string(ClipKind kind);
ClipKind clip_kind_from_string(const std::string& s);

// A short grayscale video; the unit of classification.
struct VideoClip {
  std::vector<Plane> frames;
  ClipKind kind = ClipKind::scene;
  std::optional<int> label;

  int length() const { return static_cast<int>(frames.size()); }
  Size2 frame_size() const { return frames.empty() ? Size2{} : size_of(frames.front()); }
};

// Throws unless every frame has the same size and, for scene and
// reconstructed clips, all values lie in [0, 1].
void validate_clip(const VideoClip& clip, std::optional<int> expected_length = kClipLength);

}  // namespace lgr
