#include "lgr/optics.hpp"

#include "lgr/error.hpp"
#include "lgr/rng.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

namespace lgr::optics {

SensorGeometry SensorGeometry::centered(Size2 scene, Size2 psf, Size2 sensor, Size2 padded) {
  SensorGeometry g;
  g.scene = scene;
  g.psf = psf;
  g.sensor = (sensor.height > 0 && sensor.width > 0) ? sensor : scene;
  const Size2 support{scene.height + psf.height - 1, scene.width + psf.width - 1};
  g.padded = (padded.height > 0 && padded.width > 0) ? padded : support;
  g.crop_row = (support.height - g.sensor.height) / 2;
  g.crop_col = (support.width - g.sensor.width) / 2;
  g.validate();
  return g;
}

void SensorGeometry::validate() const {
  auto positive = [](Size2 s) { return s.height > 0 && s.width > 0; };
  if (!positive(scene) || !positive(psf) || !positive(sensor) || !positive(padded))
    throw Error("geometry: all sizes must be positive");
  if (psf.height > sensor.height || psf.width > sensor.width)
    throw Error(fmt::format("geometry: PSF {}x{} larger than sensor {}x{}", psf.height, psf.width,
                            sensor.height, sensor.width));
  if (padded.height < scene.height + psf.height - 1 || padded.width < scene.width + psf.width - 1)
    throw Error("geometry: padded plane smaller than the linear convolution support");
  if (crop_row < 0 || crop_col < 0 || crop_row + sensor.height > padded.height ||
      crop_col + sensor.width > padded.width)
    throw Error("geometry: crop window outside the padded plane");
}

PointSpreadFunction make_psf(Plane grid, std::string name) {
  if (grid.size() == 0) throw Error("empty PSF");
  if (!grid.allFinite()) throw Error("non-physical PSF: non-finite entry");
  if (grid.minCoeff() < 0.0) throw Error("non-physical PSF: negative entry");
  long double total = 0.0L;
  for (Eigen::Index i = 0; i < grid.size(); ++i) total += grid.data()[i];
  if (total <= 0.0L) throw Error("all-zero PSF cannot be normalized");
  grid /= static_cast<double>(total);
  return {std::move(grid), std::move(name)};
}

PointSpreadFunction delta_psf(Size2 size) {
  Plane g = Plane::Zero(size.height, size.width);
  g((size.height - 1) / 2, (size.width - 1) / 2) = 1.0;
  return make_psf(std::move(g), fmt::format("delta{}x{}", size.height, size.width));
}

PointSpreadFunction gaussian_psf(Size2 size, double sigma) {
  Plane g(size.height, size.width);
  const double cy = (size.height - 1) / 2.0;
  const double cx = (size.width - 1) / 2.0;
  for (int r = 0; r < size.height; ++r)
    for (int c = 0; c < size.width; ++c)
      g(r, c) = std::exp(-((r - cy) * (r - cy) + (c - cx) * (c - cx)) / (2.0 * sigma * sigma));
  return make_psf(std::move(g), fmt::format("gaussian{}x{}_s{}", size.height, size.width, sigma));
}

PointSpreadFunction synthesize_caustic_psf(Size2 size, std::uint64_t seed, int points, double blur_sigma) {
  if (size.height <= 0 || size.width <= 0) throw Error("PSF size must be positive");
  if (points <= 0) points = std::max(4, size.height * size.width / 64);
  Rng rng(derive_seed(seed, "caustic"));
  Plane field = Plane::Zero(size.height, size.width);
  for (int i = 0; i < points; ++i) {
    const auto r = static_cast<int>(rng.uniform_index(size.height));
    const auto c = static_cast<int>(rng.uniform_index(size.width));
    field(r, c) += 0.25 + rng.uniform01();
  }
  // Separable Gaussian blur with zero boundary.
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * blur_sigma)));
  std::vector<double> k(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) k[i + radius] = std::exp(-0.5 * i * i / (blur_sigma * blur_sigma));
  Plane tmp = Plane::Zero(size.height, size.width);
  for (int r = 0; r < size.height; ++r)
    for (int c = 0; c < size.width; ++c)
      for (int i = -radius; i <= radius; ++i)
        if (c + i >= 0 && c + i < size.width) tmp(r, c) += k[i + radius] * field(r, c + i);
  Plane out = Plane::Zero(size.height, size.width);
  for (int r = 0; r < size.height; ++r)
    for (int c = 0; c < size.width; ++c)
      for (int i = -radius; i <= radius; ++i)
        if (r + i >= 0 && r + i < size.height) out(r, c) += k[i + radius] * tmp(r + i, c);
  return make_psf(std::move(out), fmt::format("caustic{}x{}_seed{}", size.height, size.width, seed));
}

namespace {

std::string sidecar_name(const std::filesystem::path& path) {
  for (auto candidate : {std::filesystem::path(path.string() + ".json"),
                         std::filesystem::path(path).replace_extension(".json")}) {
    if (!std::filesystem::exists(candidate)) continue;
    std::ifstream in(candidate);
    auto j = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) throw Error("corrupt PSF sidecar: " + candidate.string());
    if (j.contains("name") && j["name"].is_string()) return j["name"].get<std::string>();
  }
  return path.stem().string();
}

}  // namespace

PointSpreadFunction load_psf(const std::filesystem::path& path) {
  DecodedImage img = read_image(path);
  if (img.channels.size() != 1) throw Error("PSF must be a single-channel image: " + path.string());
  return make_psf(std::move(img.channels.front()), sidecar_name(path));
}

PointSpreadFunction load_psf(const std::filesystem::path& path, const SensorGeometry& geometry) {
  PointSpreadFunction psf = load_psf(path);
  const Size2 s = psf.size();
  if (s.height > geometry.sensor.height || s.width > geometry.sensor.width)
    throw Error(fmt::format("PSF {}x{} does not fit sensor {}x{}", s.height, s.width,
                            geometry.sensor.height, geometry.sensor.width));
  return psf;
}

void save_psf(const std::filesystem::path& path, const PointSpreadFunction& psf) {
  write_image(path, psf.grid, PixelFormat::tiff32f);
  std::ofstream(path.string() + ".json") << nlohmann::json{{"name", psf.name}}.dump(2) << "\n";
}

void NoiseSpec::validate() const {
  if (sigma < 0.0 || !std::isfinite(sigma)) throw Error("noise sigma must be finite and >= 0");
  if ((sigma == 0.0) != (model == Model::none))
    throw Error("noise: sigma must be zero exactly when the model is none");
}

LenslessCamera::LenslessCamera(SensorGeometry geometry, PointSpreadFunction psf)
    : geometry_(geometry), psf_(std::move(psf)) {
  geometry_.validate();
  if (psf_.size() != geometry_.psf) throw Error("PSF size does not match geometry");
  fft_ = std::make_shared<const Fft2d>(geometry_.padded.height, geometry_.padded.width);
  Plane h = Plane::Zero(geometry_.padded.height, geometry_.padded.width);
  h.topLeftCorner(geometry_.psf.height, geometry_.psf.width) = psf_.grid;
  transfer_ = fft_->forward(h);
}

Plane LenslessCamera::embed_scene(const Plane& scene) const {
  if (size_of(scene) != geometry_.scene)
    throw Error(fmt::format("geometry mismatch: scene {}x{} vs expected {}x{}", scene.rows(), scene.cols(),
                            geometry_.scene.height, geometry_.scene.width));
  Plane p = Plane::Zero(geometry_.padded.height, geometry_.padded.width);
  p.topLeftCorner(scene.rows(), scene.cols()) = scene;
  return p;
}

Plane LenslessCamera::restrict_scene(const Plane& padded) const {
  return padded.topLeftCorner(geometry_.scene.height, geometry_.scene.width);
}

Plane LenslessCamera::crop(const Plane& padded) const {
  if (size_of(padded) != geometry_.padded) throw Error("geometry mismatch: padded plane");
  return padded.block(geometry_.crop_row, geometry_.crop_col, geometry_.sensor.height, geometry_.sensor.width);
}

Plane LenslessCamera::pad(const Plane& sensor) const {
  if (size_of(sensor) != geometry_.sensor)
    throw Error(fmt::format("geometry mismatch: measurement {}x{} vs sensor {}x{}", sensor.rows(), sensor.cols(),
                            geometry_.sensor.height, geometry_.sensor.width));
  Plane p = Plane::Zero(geometry_.padded.height, geometry_.padded.width);
  p.block(geometry_.crop_row, geometry_.crop_col, sensor.rows(), sensor.cols()) = sensor;
  return p;
}

Plane LenslessCamera::convolve(const Plane& padded) const {
  Spectrum X = fft_->forward(padded);
  X *= transfer_;
  return fft_->inverse(X);
}

Plane LenslessCamera::correlate(const Plane& padded) const {
  Spectrum X = fft_->forward(padded);
  X *= transfer_.conjugate();
  return fft_->inverse(X);
}

Plane LenslessCamera::apply(const Plane& scene) const { return crop(convolve(embed_scene(scene))); }

Plane LenslessCamera::adjoint(const Plane& measurement) const {
  return restrict_scene(correlate(pad(measurement)));
}

SensorMeasurement forward_measure(const Plane& scene, const LenslessCamera& camera, const NoiseSpec& noise) {
  noise.validate();
  SensorMeasurement m{camera.apply(scene), false};
  if (noise.model == NoiseSpec::Model::gaussian) {
    Rng rng(derive_seed(noise.seed, "sensor-noise"));
    for (Eigen::Index i = 0; i < m.pixels.size(); ++i) m.pixels.data()[i] += noise.sigma * rng.normal();
    m.noise_applied = true;
  }
  m.pixels = m.pixels.max(0.0);
  return m;
}

SensorMeasurement forward_measure(const Plane& scene, const PointSpreadFunction& psf, const NoiseSpec& noise) {
  LenslessCamera camera(SensorGeometry::centered(size_of(scene), psf.size()), psf);
  return forward_measure(scene, camera, noise);
}

Plane adjoint_apply(const SensorMeasurement& measurement, const LenslessCamera& camera) {
  return camera.adjoint(measurement.pixels);
}

Plane adjoint_apply(const SensorMeasurement& measurement, const PointSpreadFunction& psf, Size2 scene) {
  LenslessCamera camera(SensorGeometry::centered(scene, psf.size(), size_of(measurement.pixels)), psf);
  return camera.adjoint(measurement.pixels);
}

VideoClip simulate_video(const VideoClip& clip, const LenslessCamera& camera, const NoiseSpec& noise) {
  if (clip.frames.empty()) throw Error("simulate_video: clip has no frames");
  VideoClip out;
  out.kind = ClipKind::raw;
  out.label = clip.label;
  out.frames.reserve(clip.frames.size());
  for (std::size_t i = 0; i < clip.frames.size(); ++i) {
    NoiseSpec frame_noise = noise;
    frame_noise.seed = derive_seed(noise.seed, static_cast<std::uint64_t>(i));
    out.frames.push_back(forward_measure(clip.frames[i], camera, frame_noise).pixels);
  }
  return out;
}

VideoClip simulate_video(const VideoClip& clip, const PointSpreadFunction& psf, const NoiseSpec& noise) {
  if (clip.frames.empty()) throw Error("simulate_video: clip has no frames");
  LenslessCamera camera(SensorGeometry::centered(clip.frame_size(), psf.size()), psf);
  return simulate_video(clip, camera, noise);
}

}  // namespace lgr::optics
