#include "lgr/recon.hpp"

#include "lgr/error.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>

namespace lgr::recon {

void AdmmParams::validate() const {
  if (!(rho_data > 0 && rho_tv > 0 && rho_nonneg > 0)) throw Error("ADMM penalties must be positive");
  if (!(tv_weight >= 0)) throw Error("ADMM tv_weight must be >= 0");
  if (max_iters < 1) throw Error("ADMM max_iters must be >= 1");
  if (!(primal_tol > 0 && dual_tol > 0)) throw Error("ADMM tolerances must be positive");
}

std::pair<Plane, Plane> AdmmSolver::gradient(const Plane& x) {
  const Eigen::Index H = x.rows(), W = x.cols();
  Plane dx(H, W), dy(H, W);
  for (Eigen::Index r = 0; r < H; ++r)
    for (Eigen::Index c = 0; c < W; ++c) {
      dx(r, c) = x(r, (c + 1) % W) - x(r, c);
      dy(r, c) = x((r + 1) % H, c) - x(r, c);
    }
  return {std::move(dx), std::move(dy)};
}

Plane AdmmSolver::gradient_adjoint(const Plane& dx, const Plane& dy) {
  const Eigen::Index H = dx.rows(), W = dx.cols();
  Plane out(H, W);
  for (Eigen::Index r = 0; r < H; ++r)
    for (Eigen::Index c = 0; c < W; ++c)
      out(r, c) = dx(r, (c + W - 1) % W) - dx(r, c) + dy((r + H - 1) % H, c) - dy(r, c);
  return out;
}

Plane AdmmSolver::soft_threshold(const Plane& v, double tau) {
  return v.sign() * (v.abs() - tau).max(0.0);
}

AdmmSolver::AdmmSolver(const optics::LenslessCamera& camera, AdmmParams params)
    : camera_(camera), params_(params) {
  params_.validate();
  long double total = 0.0L;
  const Plane& h = camera.psf().grid;
  for (Eigen::Index i = 0; i < h.size(); ++i) total += h.data()[i];
  if (std::abs(static_cast<double>(total) - 1.0) > 1e-6) throw Error("ADMM requires a normalized PSF");

  gram_h_ = camera.transfer().abs2();
  const Size2 p = camera.geometry().padded;
  Plane kx = Plane::Zero(p.height, p.width), ky = Plane::Zero(p.height, p.width);
  // Psi^T Psi is circular convolution with these difference autocorrelations.
  kx(0, 0) = -1.0;
  kx(0, p.width > 1 ? p.width - 1 : 0) += 1.0;
  ky(0, 0) = -1.0;
  ky(p.height > 1 ? p.height - 1 : 0, 0) += 1.0;
  gram_psi_ = camera.fft().forward(kx).abs2() + camera.fft().forward(ky).abs2();
  build_denominator(params_.rho_data, params_.rho_tv, params_.rho_nonneg);
}

void AdmmSolver::build_denominator(double rho_data, double rho_tv, double rho_nonneg) {
  denominator_ = (rho_data * gram_h_ + rho_tv * gram_psi_ + rho_nonneg).cast<std::complex<double>>();
}

Plane AdmmSolver::x_update_with(const Plane& rhs, const Spectrum& denominator) const {
  Spectrum R = camera_.fft().forward(rhs);
  R /= denominator;
  return camera_.fft().inverse(R);
}

Plane AdmmSolver::x_update(const Plane& rhs) const { return x_update_with(rhs, denominator_); }

AdmmResult AdmmSolver::solve(const Plane& measurement) const {
  const auto& cam = camera_;
  const Size2 p = cam.geometry().padded;
  double mu1 = params_.rho_data, mu2 = params_.rho_tv, mu3 = params_.rho_nonneg;
  const double tau = params_.tv_weight;
  Spectrum denominator = denominator_;

  // C^T b and the diagonal of (C^T C + mu1 I).
  const Plane ctb = cam.pad(measurement);
  const Plane crop_mask = cam.pad(Plane::Ones(measurement.rows(), measurement.cols()));

  Plane x = Plane::Zero(p.height, p.width);
  Plane nu = Plane::Zero(p.height, p.width), xi = Plane::Zero(p.height, p.width);
  Plane ux = nu, uy = nu, eta_x = nu, eta_y = nu;
  Plane w = nu, rho = nu;
  Plane hx = nu;
  auto [dx, dy] = gradient(x);

  AdmmResult result;
  double initial_primal = -1.0;
  for (int it = 1; it <= params_.max_iters; ++it) {
    const Plane nu_prev = nu, ux_prev = ux, uy_prev = uy, w_prev = w;

    ux = soft_threshold(dx + eta_x / mu2, tau / mu2);
    uy = soft_threshold(dy + eta_y / mu2, tau / mu2);
    nu = (xi + mu1 * hx + ctb) / (crop_mask + mu1);
    w = (x + rho / mu3).max(0.0);

    const Plane rhs = (mu3 * w - rho) + gradient_adjoint(mu2 * ux - eta_x, mu2 * uy - eta_y) +
                      cam.correlate(mu1 * nu - xi);
    x = x_update_with(rhs, denominator);
    hx = cam.convolve(x);
    std::tie(dx, dy) = gradient(x);

    const Plane r_nu = hx - nu, r_ux = dx - ux, r_uy = dy - uy, r_w = x - w;
    xi += mu1 * r_nu;
    eta_x += mu2 * r_ux;
    eta_y += mu2 * r_uy;
    rho += mu3 * r_w;

    const double primal = std::sqrt(r_nu.square().sum() + r_ux.square().sum() + r_uy.square().sum() +
                                    r_w.square().sum());
    const double ax = std::sqrt(hx.square().sum() + dx.square().sum() + dy.square().sum() + x.square().sum());
    const double z = std::sqrt(nu.square().sum() + ux.square().sum() + uy.square().sum() + w.square().sum());
    const Plane s = cam.correlate(mu1 * (nu - nu_prev)) +
                    gradient_adjoint(mu2 * (ux - ux_prev), mu2 * (uy - uy_prev)) + mu3 * (w - w_prev);
    const Plane aty = cam.correlate(xi) + gradient_adjoint(eta_x, eta_y) + rho;
    const Plane atz = cam.correlate(mu1 * nu) + gradient_adjoint(mu2 * ux, mu2 * uy) + mu3 * w;
    const double dual = std::sqrt(s.square().sum());
    constexpr double tiny = 1e-300;
    ResidualRecord rec;
    rec.iter = it;
    rec.primal = primal / std::max({ax, z, tiny});
    // A^T y vanishes at a consistent noiseless solution, so the penalty-weighted
    // A^T z also bounds the scale.
    rec.dual = dual / std::max({std::sqrt(aty.square().sum()), std::sqrt(atz.square().sum()), tiny});
    // Degenerate all-zero problems have nothing left to reduce.
    if (ax <= tiny && z <= tiny) rec.primal = 0.0;
    if (dual <= tiny) rec.dual = 0.0;
    rec.objective = 0.5 * (cam.crop(hx) - measurement).square().sum() + tau * (dx.abs().sum() + dy.abs().sum());
    result.history.push_back(rec);

    if (!std::isfinite(primal) || !std::isfinite(dual)) throw Error("ADMM diverged: non-finite residual");
    if (initial_primal < 0.0) initial_primal = std::max(primal, tiny);
    if (primal > 1e6 * initial_primal) throw Error(fmt::format("ADMM diverged at iteration {}", it));

    if (rec.primal < params_.primal_tol && rec.dual < params_.dual_tol) {
      result.converged = true;
      break;
    }

    if (params_.adaptive_rho) {
      const double scale = primal > 10.0 * dual ? 2.0 : (dual > 10.0 * primal ? 0.5 : 1.0);
      if (scale != 1.0) {
        mu1 *= scale;
        mu2 *= scale;
        mu3 *= scale;
        denominator = (mu1 * gram_h_ + mu2 * gram_psi_ + mu3).cast<std::complex<double>>();
      }
    }
  }

  result.estimate = w;
  result.scene = cam.restrict_scene(w).min(1.0).max(0.0);
  return result;
}

AdmmResult admm_reconstruct(const optics::SensorMeasurement& measurement, const optics::LenslessCamera& camera,
                            const AdmmParams& params) {
  return AdmmSolver(camera, params).solve(measurement.pixels);
}

double objective_value(const Plane& x, const Plane& measurement, const optics::LenslessCamera& camera,
                       const AdmmParams& params) {
  if (x.minCoeff() < -1e-9) return std::numeric_limits<double>::infinity();
  const Plane padded = size_of(x) == camera.geometry().padded ? x : camera.embed_scene(x);
  const Plane residual = camera.crop(camera.convolve(padded)) - measurement;
  double tv = 0.0;
  if (params.tv_weight > 0.0) {
    auto [dx, dy] = AdmmSolver::gradient(padded);
    tv = dx.abs().sum() + dy.abs().sum();
  }
  return 0.5 * residual.square().sum() + params.tv_weight * tv;
}

VideoClip reconstruct_clip(const VideoClip& raw, const optics::LenslessCamera& camera, const AdmmParams& params,
                           std::vector<std::vector<ResidualRecord>>* histories) {
  AdmmSolver solver(camera, params);
  VideoClip out;
  out.kind = ClipKind::reconstructed;
  out.label = raw.label;
  for (const auto& frame : raw.frames) {
    AdmmResult r = solver.solve(frame);
    out.frames.push_back(std::move(r.scene));
    if (histories) histories->push_back(std::move(r.history));
  }
  return out;
}

}  // namespace lgr::recon
