#pragma once

#include "lgr/image.hpp"

#include <complex>
#include <memory>

namespace lgr {

using Spectrum = Eigen::Array<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Real 2-D FFT of a fixed shape backed by FFTW. The half spectrum has
// rows x (cols/2 + 1) entries. inverse() is normalized so that
// inverse(forward(x)) == x. Plans are immutable after construction, so one
// instance may be shared across threads.
class Fft2d {
 public:
  Fft2d(int rows, int cols);
  ~Fft2d();
  Fft2d(const Fft2d&) = delete;
  Fft2d& operator=(const Fft2d&) = delete;
  Fft2d(Fft2d&&) noexcept;
  Fft2d& operator=(Fft2d&&) noexcept;

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int spectrum_cols() const { return cols_ / 2 + 1; }

  Spectrum forward(const Plane& x) const;
  Plane inverse(const Spectrum& X) const;

 private:
  struct Plans;
  int rows_ = 0;
  int cols_ = 0;
  std::unique_ptr<Plans> plans_;
};

}  // namespace lgr
