#pragma once

#include <Eigen/Core>
#include <vector>

#include "mlrem/emcore.hpp"
#include "mlrem/model.hpp"
#include "mlrem/quadrature.hpp"

namespace mlrem {

/// SNR-dependent quantities of a population EM state:
///   a_eta      = k eta^2 sqrt(1 + eta^-2)
///   varphi_eta = arcsin(sin varphi / sqrt(1 + eta^-2))
///   sin_ratio  = sin varphi / sin varphi_eta, by convention sqrt(1 + eta^-2)
///                at varphi = 0.
struct GeneralSnrContext {
  double eta = 0.0;
  double k = 0.0;
  double varphi = 0.0;
  double sgn_rho = 1.0;
  double a_eta = 0.0;
  double varphi_eta = 0.0;
  double sin_varphi_eta = 0.0;
  double cos_varphi_eta = 1.0;
  double sin_ratio = 1.0;

  static GeneralSnrContext make(double k, double varphi, double sgn_rho, double eta);
};

/// Noiseless population update for theta:
///   M / ||theta*|| = (2/pi) [sgn(rho) varphi theta*/||theta*|| + cos(varphi) theta/||theta||].
/// theta = 0 returns the zero vector (a fixed point of the map).
Eigen::VectorXd m_noiseless(const Eigen::VectorXd& theta, const GroundTruth& gt);

/// Noiseless population update for the imbalance:
///   N = sgn(rho) (2/pi) varphi tanh(nu*)  (independent of the current nu).
double n_noiseless(const Eigen::VectorXd& theta, const GroundTruth& gt);

/// Angle recurrence tan(varphi') = tan(varphi) + varphi (tan^2(varphi) + 1),
/// returned as varphi' = arctan(...); varphi = pi/2 is absorbing.
double recurrence_step(double varphi);

struct PopulationStop {
  int max_iters = 100;
  double eps_phi = 1e-13;
};

/// Noiseless population EM run from theta0 (nu0 = 0). Flags rho^0 = 0 as a
/// saddle (the iteration stays orthogonal and cannot converge).
struct PopulationRun {
  std::vector<TrajectoryRecord> records;
  bool converged = false;
  bool saddle = false;
};
PopulationRun run_population_noiseless(const Eigen::VectorXd& theta0, const GroundTruth& gt,
                                       const PopulationStop& stop);

/// General-SNR population update for theta, evaluated from the explicit
/// two-Gaussian expectations (mixing over the latent label with weights pi*)
/// and reconstructed in the span{theta, theta*} frame. Requires finite
/// positive SNR; theta = 0 maps to 0.
Eigen::VectorXd m_general(const Eigen::VectorXd& theta, double nu, const GroundTruth& gt,
                          const QuadratureSpec& quad);

/// General-SNR population update for the imbalance tanh(nu').
double n_general(const Eigen::VectorXd& theta, double nu, const GroundTruth& gt,
                 const QuadratureSpec& quad);

/// ||M(theta, nu)|| <= (arctan(eta) / (pi/2)) ||theta*|| + (2/pi) sigma.
double m_norm_bound(const GroundTruth& gt);

/// E[tanh(A X) X] for the Bessel-product variable X (density K_0(|x|)/pi).
double expect_tanh_ax_x(double A, const QuadratureSpec& quad);

/// Unique root in (1/sqrt(3), min((2/pi) sqrt(1+eta^-2), 1)) of
///   sqrt(1+eta^-2) E[tanh(k eta^2 sqrt(1+eta^-2) X) X] - k = 0,
/// by bisection on [0.5, 1.05] to within tol. Throws when the bracket fails
/// to change sign (quadrature under-resolution).
double k_star(double eta, const QuadratureSpec& quad, double tol);

/// || M(theta,nu)/||theta*|| - lim_{eta->inf} M(theta,nu)/||theta*|| || at a
/// balanced state (nu = nu* = 0), parameterized by (k, varphi, eta).
double deviation_from_limit(double k, double varphi, double eta, const QuadratureSpec& quad);

/// Closed forms for a correlated pair with E[g g'] = sin(varphi):
///   E[sgn(g g')]     = (2/pi) varphi
///   E[|g g'|]        = (2/pi) (varphi sin varphi + cos varphi)
///   E[g^2 sgn(g g')] = (2/pi) (varphi + sin varphi cos varphi)
struct SignProductExpectations {
  double sign_mean = 0.0;
  double abs_product = 0.0;
  double g2_sign = 0.0;
};
SignProductExpectations sign_product_expectations(double varphi);

/// Independent quadrature route for the same three expectations.
SignProductExpectations sign_product_expectations_quadrature(double varphi,
                                                             const QuadratureSpec& quad);

/// E[X^{2n}] of the Bessel-product variable by tensor quadrature; the closed
/// form is [(2n-1)!!]^2.
double bessel_product_even_moment(int n, const QuadratureSpec& quad);

}  // namespace mlrem
