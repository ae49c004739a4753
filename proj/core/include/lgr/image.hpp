#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <vector>

namespace lgr {

// Row-major 2-D real array; rows = height, cols = width.
using Plane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Size2 {
  int height = 0;
  int width = 0;
  friend bool operator==(const Size2&, const Size2&) = default;
};

inline Size2 size_of(const Plane& p) {
  return {static_cast<int>(p.rows()), static_cast<int>(p.cols())};
}

// Bilinear resampling with half-pixel centers (align_corners = false); source
// coordinates are clamped at the border.
Plane resize_bilinear(const Plane& src, Size2 target);

// Peak signal-to-noise ratio in dB for signals with the given peak value.
double psnr(const Plane& estimate, const Plane& reference, double peak = 1.0);

// Decoded image with channels in RGB(A) order. Values are the stored sample
// values (0..255, 0..65535, or the float sample) and max_value is the nominal
// full-scale value of the storage type (1 for float images).
struct DecodedImage {
  std::vector<Plane> channels;
  double max_value = 1.0;
  bool floating_point = false;
};

DecodedImage read_image(const std::filesystem::path& path);

enum class PixelFormat { png8, png16, tiff32f };

PixelFormat pixel_format_from_name(const std::string& name);
const char* extension_for(PixelFormat format);

// Writes a single-channel image. Integer formats clamp to [0, 1] and round
// to the nearest code value; the float format stores values unchanged.
void write_image(const std::filesystem::path& path, const Plane& plane, PixelFormat format);

bool is_image_file(const std::filesystem::path& path);

}  // namespace lgr
