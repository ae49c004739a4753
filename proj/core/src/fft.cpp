#include "lgr/fft.hpp"

#include "lgr/error.hpp"

#include <fftw3.h>

#include <mutex>

namespace lgr {
namespace {
// FFTW planning is not thread-safe; execution with the new-array interface is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

struct Fft2d::Plans {
  fftw_plan r2c = nullptr;
  fftw_plan c2r = nullptr;
};

Fft2d::Fft2d(int rows, int cols) : rows_(rows), cols_(cols), plans_(std::make_unique<Plans>()) {
  if (rows <= 0 || cols <= 0) throw Error("FFT shape must be positive");
  Plane scratch(rows, cols);
  Spectrum spec(rows, cols / 2 + 1);
  std::lock_guard lock(planner_mutex());
  plans_->r2c = fftw_plan_dft_r2c_2d(rows, cols, scratch.data(),
                                     reinterpret_cast<fftw_complex*>(spec.data()),
                                     FFTW_ESTIMATE | FFTW_UNALIGNED);
  plans_->c2r = fftw_plan_dft_c2r_2d(rows, cols, reinterpret_cast<fftw_complex*>(spec.data()),
                                     scratch.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (!plans_->r2c || !plans_->c2r) throw Error("FFTW planning failed");
}

Fft2d::~Fft2d() {
  if (!plans_) return;
  std::lock_guard lock(planner_mutex());
  if (plans_->r2c) fftw_destroy_plan(plans_->r2c);
  if (plans_->c2r) fftw_destroy_plan(plans_->c2r);
}

Fft2d::Fft2d(Fft2d&&) noexcept = default;
Fft2d& Fft2d::operator=(Fft2d&&) noexcept = default;

Spectrum Fft2d::forward(const Plane& x) const {
  if (x.rows() != rows_ || x.cols() != cols_) throw Error("FFT input shape mismatch");
  Plane in = x;  // r2c may not preserve its input for multi-dimensional transforms
  Spectrum out(rows_, spectrum_cols());
  fftw_execute_dft_r2c(plans_->r2c, in.data(), reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

Plane Fft2d::inverse(const Spectrum& X) const {
  if (X.rows() != rows_ || X.cols() != spectrum_cols()) throw Error("FFT spectrum shape mismatch");
  Spectrum in = X;  // c2r destroys its input
  Plane out(rows_, cols_);
  fftw_execute_dft_c2r(plans_->c2r, reinterpret_cast<fftw_complex*>(in.data()), out.data());
  out /= static_cast<double>(rows_) * cols_;
  return out;
}

}  // namespace lgr
