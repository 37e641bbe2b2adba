#include "mlrem/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mlrem {

namespace {

// Deterministic unit vector orthogonal to u: Gram-Schmidt of the
// lowest-index coordinate axis that is not (nearly) parallel to u.
Eigen::VectorXd orthogonal_completion(const Eigen::VectorXd& u) {
  const int d = static_cast<int>(u.size());
  if (d < 2) throw std::invalid_argument("orthogonal completion needs d >= 2");
  for (int i = 0; i < d; ++i) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(d);
    v(i) = 1.0;
    v -= u(i) * u;
    const double nrm = v.norm();
    if (nrm > 0.5) return v / nrm;  // axis at least 60 degrees away from u
  }
  throw std::logic_error("orthogonal completion failed");  // unreachable
}

}  // namespace

AngleDiagnostics angle_diagnostics(const Eigen::VectorXd& theta, const GroundTruth& gt) {
  if (gt.degenerate()) {
    throw std::invalid_argument("angle_diagnostics: theta* = 0 (degenerate model)");
  }
  if (!theta.allFinite()) {
    throw std::invalid_argument("angle_diagnostics: theta must be finite");
  }
  AngleDiagnostics a;
  const double tn = theta.norm();
  a.k = tn / gt.theta_norm;
  if (tn == 0.0) {
    a.degenerate = true;
    a.rho = 0.0;
    a.sgn_rho = 1.0;
    a.varphi = 0.0;
    a.phi = M_PI;
    return a;
  }
  double rho = theta.dot(gt.theta_star) / (tn * gt.theta_norm);
  rho = std::clamp(rho, -1.0, 1.0);
  a.rho = rho;
  a.sgn_rho = (rho >= 0.0) ? 1.0 : -1.0;  // sgn(0) = +1
  const double acr = std::acos(std::abs(rho));
  a.varphi = M_PI / 2.0 - acr;
  a.phi = 2.0 * acr;
  return a;
}

PlaneFrame plane_frame(const Eigen::VectorXd& theta, const GroundTruth& gt) {
  if (gt.degenerate()) {
    throw std::invalid_argument("plane_frame: theta* = 0 (degenerate model)");
  }
  const double tn = theta.norm();
  if (tn == 0.0) {
    throw std::invalid_argument("plane_frame: theta = 0");
  }
  PlaneFrame f;
  f.e_hat_1 = gt.theta_star / gt.theta_norm;
  f.e_1 = theta / tn;

  const double rho = std::clamp(f.e_1.dot(f.e_hat_1), -1.0, 1.0);
  f.degenerate = std::abs(rho) > 1.0 - 1e-12;
  if (f.degenerate) {
    f.e_hat_2 = orthogonal_completion(f.e_hat_1);
    f.e_2 = orthogonal_completion(f.e_1);
    return f;
  }
  Eigen::VectorXd v = f.e_1 - rho * f.e_hat_1;   // theta component off theta*
  f.e_hat_2 = v / v.norm();
  Eigen::VectorXd w = f.e_hat_1 - rho * f.e_1;   // theta* component off theta
  f.e_2 = w / w.norm();
  return f;
}

PlaneCoordinates plane_coordinates(const Eigen::VectorXd& theta, const GroundTruth& gt,
                                   const PlaneFrame& frame) {
  if (gt.degenerate()) {
    throw std::invalid_argument("plane_coordinates: theta* = 0 (degenerate model)");
  }
  PlaneCoordinates c;
  const Eigen::VectorXd scaled = theta / gt.theta_norm;
  c.x = scaled.dot(frame.e_hat_1);
  c.y = scaled.dot(frame.e_hat_2);
  c.out_of_plane = (scaled - c.x * frame.e_hat_1 - c.y * frame.e_hat_2).norm();
  return c;
}

Eigen::Vector2d cycloid_point(double phi, double sgn_rho0) {
  phi = std::clamp(phi, 0.0, M_PI);
  const double x = sgn_rho0 * (1.0 - (phi - std::sin(phi)) / M_PI);
  const double y = (1.0 - std::cos(phi)) / M_PI;
  return {x, y};
}

double distance_to_cycloid(const Eigen::Vector2d& point, double sgn_rho0) {
  if (!point.allFinite()) {
    throw std::invalid_argument("distance_to_cycloid: point must be finite");
  }
  constexpr int kGrid = 10000;
  double best = std::numeric_limits<double>::infinity();
  double best_phi = 0.0;
  for (int i = 0; i <= kGrid; ++i) {
    const double phi = M_PI * i / kGrid;
    const double dist = (cycloid_point(phi, sgn_rho0) - point).norm();
    if (dist < best) {
      best = dist;
      best_phi = phi;
    }
  }
  // Ternary refinement inside the bracketing grid cells.
  double lo = std::max(0.0, best_phi - M_PI / kGrid);
  double hi = std::min(M_PI, best_phi + M_PI / kGrid);
  for (int it = 0; it < 80; ++it) {
    const double m1 = lo + (hi - lo) / 3.0;
    const double m2 = hi - (hi - lo) / 3.0;
    const double d1 = (cycloid_point(m1, sgn_rho0) - point).norm();
    const double d2 = (cycloid_point(m2, sgn_rho0) - point).norm();
    if (d1 < d2) {
      hi = m2;
    } else {
      lo = m1;
    }
  }
  const double mid = 0.5 * (lo + hi);
  return std::min(best, (cycloid_point(mid, sgn_rho0) - point).norm());
}

}  // namespace mlrem
