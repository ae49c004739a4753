#include "lgr/image.hpp"

#include "lgr/error.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>

namespace lgr {

Plane resize_bilinear(const Plane& src, Size2 target) {
  if (target.height <= 0 || target.width <= 0) throw Error("resize target must be positive");
  const int sh = static_cast<int>(src.rows());
  const int sw = static_cast<int>(src.cols());
  if (sh == 0 || sw == 0) throw Error("cannot resize an empty image");
  Plane out(target.height, target.width);
  const double sy = static_cast<double>(sh) / target.height;
  const double sx = static_cast<double>(sw) / target.width;

  for (int y = 0; y < target.height; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(sh - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, sh - 1);
    const double wy = fy - y0;
    for (int x = 0; x < target.width; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(sw - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, sw - 1);
      const double wx = fx - x0;
      const double top = (1.0 - wx) * src(y0, x0) + wx * src(y0, x1);
      const double bottom = (1.0 - wx) * src(y1, x0) + wx * src(y1, x1);
      out(y, x) = (1.0 - wy) * top + wy * bottom;
    }
  }
  return out;
}

double psnr(const Plane& estimate, const Plane& reference, double peak) {
  if (size_of(estimate) != size_of(reference)) throw Error("psnr: size mismatch");
  const double mse = (estimate - reference).square().mean();
  if (mse <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

DecodedImage read_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error("image not found: " + path.string());
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (mat.empty()) throw Error("cannot decode image: " + path.string());

  DecodedImage img;
  switch (mat.depth()) {
    case CV_8U: img.max_value = 255.0; break;
    case CV_16U: img.max_value = 65535.0; break;
    case CV_32F:
    case CV_64F:
      img.max_value = 1.0;
      img.floating_point = true;
      break;
    default: throw Error("unsupported pixel depth in " + path.string());
  }

  cv::Mat as_double;
  mat.convertTo(as_double, CV_64F);
  std::vector<cv::Mat> planes;
  cv::split(as_double, planes);
  // OpenCV stores colour as BGR(A); report RGB(A).
  if (planes.size() >= 3) std::swap(planes[0], planes[2]);
  for (const auto& p : planes) {
    Plane plane(p.rows, p.cols);
    for (int r = 0; r < p.rows; ++r) {
      const double* row = p.ptr<double>(r);
      std::copy(row, row + p.cols, &plane(r, 0));
    }
    img.channels.push_back(std::move(plane));
  }
  return img;
}

PixelFormat pixel_format_from_name(const std::string& name) {
  if (name == "png8" || name == "png") return PixelFormat::png8;
  if (name == "png16") return PixelFormat::png16;
  if (name == "tiff" || name == "tiff32f" || name == "tif") return PixelFormat::tiff32f;
  throw Error("unknown pixel format '" + name + "' (expected png8, png16 or tiff)");
}

const char* extension_for(PixelFormat format) {
  return format == PixelFormat::tiff32f ? ".tiff" : ".png";
}

void write_image(const std::filesystem::path& path, const Plane& plane, PixelFormat format) {
  const int rows = static_cast<int>(plane.rows());
  const int cols = static_cast<int>(plane.cols());
  cv::Mat mat;
  switch (format) {
    case PixelFormat::png8: {
      mat.create(rows, cols, CV_8U);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
          mat.at<std::uint8_t>(r, c) =
              static_cast<std::uint8_t>(std::lround(std::clamp(plane(r, c), 0.0, 1.0) * 255.0));
      break;
    }
    case PixelFormat::png16: {
      mat.create(rows, cols, CV_16U);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
          mat.at<std::uint16_t>(r, c) =
              static_cast<std::uint16_t>(std::lround(std::clamp(plane(r, c), 0.0, 1.0) * 65535.0));
      break;
    }
    case PixelFormat::tiff32f: {
      mat.create(rows, cols, CV_32F);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) mat.at<float>(r, c) = static_cast<float>(plane(r, c));
      break;
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), mat)) throw Error("cannot write image: " + path.string());
}

bool is_image_file(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".tif" ||
         ext == ".tiff" || ext == ".pgm" || ext == ".ppm";
}

}  // namespace lgr
