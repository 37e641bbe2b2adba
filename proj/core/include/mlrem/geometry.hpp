#pragma once

#include <Eigen/Core>

#include "mlrem/model.hpp"

namespace mlrem {

/// Sub-optimality angles of an iterate against the ground truth.
///   rho    = <theta, theta*> / (||theta|| ||theta*||), clamped into [-1, 1]
///   varphi = pi/2 - arccos|rho|   in [0, pi/2]
///   phi    = 2 arccos|rho|        in [0, pi]
///   k      = ||theta|| / ||theta*||
/// Convention: sgn_rho = +1 at rho = 0.
struct AngleDiagnostics {
  double rho = 0.0;
  double sgn_rho = 1.0;
  double varphi = 0.0;
  double phi = 0.0;
  double k = 0.0;
  bool degenerate = false;  // theta = 0
};

/// Throws std::invalid_argument when the model is degenerate (theta* = 0).
AngleDiagnostics angle_diagnostics(const Eigen::VectorXd& theta, const GroundTruth& gt);

/// Orthonormal frames of span{theta, theta*}:
///   e_hat_1 = theta*/||theta*||, e_hat_2 = Gram-Schmidt of theta against e_hat_1,
///   e_1     = theta/||theta||,   e_2     = Gram-Schmidt of theta* against e_1.
/// When theta and theta* are (numerically) collinear, the orthogonal
/// completions fall back to a deterministic coordinate-axis choice and the
/// frame is flagged degenerate.
struct PlaneFrame {
  Eigen::VectorXd e_hat_1, e_hat_2;
  Eigen::VectorXd e_1, e_2;
  bool degenerate = false;
};

PlaneFrame plane_frame(const Eigen::VectorXd& theta, const GroundTruth& gt);

/// Coordinates of theta/||theta*|| in the (e_hat_1, e_hat_2) frame plus the
/// residual norm outside span{e_hat_1, e_hat_2}.
struct PlaneCoordinates {
  double x = 0.0;
  double y = 0.0;
  double out_of_plane = 0.0;
};

PlaneCoordinates plane_coordinates(const Eigen::VectorXd& theta, const GroundTruth& gt,
                                   const PlaneFrame& frame);

/// Parametric point of the EM cycloid in the (e_hat_1, e_hat_2^0) frame, in
/// units of ||theta*||:
///   1 - sgn_rho0 * x = (phi - sin phi)/pi,  y = (1 - cos phi)/pi.
/// phi is clamped into [0, pi].
Eigen::Vector2d cycloid_point(double phi, double sgn_rho0);

/// Minimum Euclidean distance from a point to the cycloid arc, computed on a
/// dense parameter grid followed by local ternary refinement (the cusp at
/// phi = 0 rules out derivative-based root finding); accurate to 1e-6.
double distance_to_cycloid(const Eigen::Vector2d& point, double sgn_rho0);

}  // namespace mlrem
