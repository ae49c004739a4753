#pragma once

#include "lgr/clip.hpp"
#include "lgr/optics.hpp"

#include <vector>

namespace lgr::recon {

struct AdmmParams {
  double rho_data = 1.0;    // penalty on nu = Hx
  double rho_tv = 5e-3;      // penalty on u = Psi x
  double rho_nonneg = 1e-2;  // penalty on w = x
  double tv_weight = 1e-3;
  int max_iters = 200;
  double primal_tol = 1e-3;  // relative
  double dual_tol = 1e-3;    // relative
  // Residual balancing (penalties doubled/halved when residuals differ by 10x).
  bool adaptive_rho = false;

  void validate() const;
};

struct ResidualRecord {
  int iter = 0;
  double primal = 0.0;  // relative primal residual
  double dual = 0.0;    // relative dual residual
  double objective = 0.0;
};

struct AdmmResult {
  Plane scene;  // scene block of the estimate, clamped to [0, 1]
  Plane estimate;  // non-negative padded-plane estimate before clamping
  std::vector<ResidualRecord> history;
  bool converged = false;
};

// ADMM for min_x 1/2 |C H x - b|^2 + tv_weight * TV(x) + indicator(x >= 0) on
// the padded plane, with splits nu = Hx, u = Psi x (circular anisotropic
// differences), w = x.
class AdmmSolver {
 public:
  AdmmSolver(const optics::LenslessCamera& camera, AdmmParams params);

  AdmmResult solve(const Plane& measurement) const;

  // (rho_data H^T H + rho_tv Psi^T Psi + rho_nonneg I)^{-1} rhs on the padded plane.
  Plane x_update(const Plane& rhs) const;

  // Circular forward differences along columns and rows and their adjoint.
  static std::pair<Plane, Plane> gradient(const Plane& x);
  static Plane gradient_adjoint(const Plane& dx, const Plane& dy);
  static Plane soft_threshold(const Plane& v, double tau);

 private:
  void build_denominator(double rho_data, double rho_tv, double rho_nonneg);
  Plane x_update_with(const Plane& rhs, const Spectrum& denominator) const;

  const optics::LenslessCamera& camera_;
  AdmmParams params_;
  Eigen::ArrayXXd gram_h_;    // |H|^2 on the half spectrum
  Eigen::ArrayXXd gram_psi_;  // |Dx|^2 + |Dy|^2 on the half spectrum
  Spectrum denominator_;
};

AdmmResult admm_reconstruct(const optics::SensorMeasurement& measurement, const optics::LenslessCamera& camera,
                            const AdmmParams& params = {});

// 1/2 |C H x - b|^2 + tv_weight * TV(x). x may be scene-sized (embedded in the
// padded plane) or padded-plane sized. Returns +inf when any x < -1e-9.
double objective_value(const Plane& x, const Plane& measurement, const optics::LenslessCamera& camera,
                       const AdmmParams& params);

// Frame-wise reconstruction; kind becomes reconstructed.
VideoClip reconstruct_clip(const VideoClip& raw, const optics::LenslessCamera& camera, const AdmmParams& params = {},
                           std::vector<std::vector<ResidualRecord>>* histories = nullptr);

}  // namespace lgr::recon
