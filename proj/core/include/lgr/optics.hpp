#pragma once

#include "lgr/clip.hpp"
#include "lgr/fft.hpp"
#include "lgr/image.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

namespace lgr::optics {

// Geometry of the lensless forward model b = crop(h * x).
//
// The scene occupies the top-left scene-sized block of the padded plane and
// the PSF the top-left psf-sized block, so circular convolution on the padded
// plane equals linear convolution as long as the plane is at least
// (scene + psf - 1) on each axis. The crop window has sensor size and is
// centered on the support of the linear convolution.
struct SensorGeometry {
  Size2 scene;
  Size2 psf;
  Size2 sensor;
  Size2 padded;
  int crop_row = 0;
  int crop_col = 0;

  // sensor defaults to the scene size, padded to scene + psf - 1.
  static SensorGeometry centered(Size2 scene, Size2 psf, Size2 sensor = {}, Size2 padded = {});

  void validate() const;
  friend bool operator==(const SensorGeometry&, const SensorGeometry&) = default;
};

struct PointSpreadFunction {
  Plane grid;
  std::string name;

  Size2 size() const { return size_of(grid); }
};

// Normalizes a kernel to unit sum. Throws "non-physical PSF" on a negative
// entry and refuses an all-zero kernel.
PointSpreadFunction make_psf(Plane grid, std::string name);

// Unit impulse at index ((h-1)/2, (w-1)/2).
PointSpreadFunction delta_psf(Size2 size);

// Pseudo-random caustic: a sparse field of bright points blurred by a
// Gaussian, normalized. Deterministic in (size, seed).
PointSpreadFunction synthesize_caustic_psf(Size2 size, std::uint64_t seed, int points = 0,
                                           double blur_sigma = 1.5);

PointSpreadFunction gaussian_psf(Size2 size, double sigma);

// Loads a single-channel PSF image (float TIFF, 8/16-bit PNG). An optional
// JSON sidecar <path>.json or <stem>.json supplies {name}. When geometry is
// given the kernel must fit its sensor.
PointSpreadFunction load_psf(const std::filesystem::path& path);
PointSpreadFunction load_psf(const std::filesystem::path& path, const SensorGeometry& geometry);

void save_psf(const std::filesystem::path& path, const PointSpreadFunction& psf);

struct NoiseSpec {
  enum class Model { none, gaussian };
  Model model = Model::none;
  double sigma = 0.0;
  std::uint64_t seed = 0;

  static NoiseSpec none() { return {}; }
  static NoiseSpec gaussian(double sigma, std::uint64_t seed) { return {Model::gaussian, sigma, seed}; }
  void validate() const;
};

struct SensorMeasurement {
  Plane pixels;
  bool noise_applied = false;
};

// Precomputed forward operator A = C H for one (geometry, PSF) pair.
// Immutable after construction; safe to share across threads.
class LenslessCamera {
 public:
  LenslessCamera(SensorGeometry geometry, PointSpreadFunction psf);

  const SensorGeometry& geometry() const { return geometry_; }
  const PointSpreadFunction& psf() const { return psf_; }
  const Fft2d& fft() const { return *fft_; }
  // PSF transfer function on the padded plane.
  const Spectrum& transfer() const { return transfer_; }

  // Noise-free forward model, no clamping.
  Plane apply(const Plane& scene) const;
  // A^T: zero-pad to the padded plane, correlate with the PSF, restrict to the scene block.
  Plane adjoint(const Plane& measurement) const;

  // Padded-plane building blocks.
  Plane embed_scene(const Plane& scene) const;
  Plane restrict_scene(const Plane& padded) const;
  Plane crop(const Plane& padded) const;
  Plane pad(const Plane& sensor) const;
  Plane convolve(const Plane& padded) const;
  Plane correlate(const Plane& padded) const;

 private:
  SensorGeometry geometry_;
  PointSpreadFunction psf_;
  std::shared_ptr<const Fft2d> fft_;
  Spectrum transfer_;
};

// Crop of the linear convolution h * x, optional noise, clamped to >= 0.
SensorMeasurement forward_measure(const Plane& scene, const LenslessCamera& camera,
                                  const NoiseSpec& noise = {});
SensorMeasurement forward_measure(const Plane& scene, const PointSpreadFunction& psf,
                                  const NoiseSpec& noise = {});

Plane adjoint_apply(const SensorMeasurement& measurement, const LenslessCamera& camera);
Plane adjoint_apply(const SensorMeasurement& measurement, const PointSpreadFunction& psf, Size2 scene);

// Frame i uses a noise seed derived from (noise.seed, i).
VideoClip simulate_video(const VideoClip& clip, const LenslessCamera& camera, const NoiseSpec& noise = {});
VideoClip simulate_video(const VideoClip& clip, const PointSpreadFunction& psf, const NoiseSpec& noise = {});

}  // namespace lgr::optics
