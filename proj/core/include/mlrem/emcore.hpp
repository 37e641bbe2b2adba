#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "mlrem/model.hpp"
#include "mlrem/quadrature.hpp"

namespace mlrem {

/// Current EM iterate: regression parameters and mixing-weight imbalance.
/// nu may be +-inf (tanh saturated at +-1).
struct EMState {
  Eigen::VectorXd theta;
  double nu = 0.0;

  double tanh_nu() const;
};

/// Iteration budget for the staged EM runs. delta is diagnostic metadata
/// (confidence level used in floor estimates); no update depends on it.
struct Schedule {
  int t0_easy_init = 0;    // sample-splitting Easy EM iterations
  int t1_easy = 0;         // Easy EM iterations on the full dataset
  int t_standard_max = 0;  // standard EM iteration cap
  double eps_phi = 0.0;    // early-exit target for the angle phi (needs ground truth)
  double delta = 0.05;
};

/// Per-iteration diagnostics of a run against a known ground truth.
///   theta_err  = ||theta^t - sgn(rho^t) theta*|| / ||theta*||
///   weight_err = ||pi^t - pibar*||_1, pibar* = 1/2 + sgn(rho^t)(pi* - 1/2)
///   out_of_plane = residual of theta^t/||theta*|| off span{theta^0, theta*}
/// nll is present only for sigma > 0 runs; error fields are NaN when no
/// ground truth was supplied.
struct TrajectoryRecord {
  int t = 0;
  double theta_err = 0.0;
  double weight_err = 0.0;
  double varphi = 0.0;
  double phi = 0.0;
  std::optional<double> nll;
  double out_of_plane = 0.0;
};

/// One finite-sample EM step (Eq. with the sample-covariance solve):
///   theta' solves (X^T X / n) theta' = (1/n) sum_i w_i y_i x_i,
///   nu'    = arctanh((1/n) sum_i w_i),
/// with w_i = tanh(y_i <x_i, theta>/sigma^2 + nu) for sigma > 0 and
/// w_i = sgn(y_i <x_i, theta>) (ties resolved as tanh nu) for sigma = 0.
/// Requires n >= d; throws when the sample covariance is singular or has
/// condition number above 1e12. |N_n| >= 1 - 1e-15 saturates nu' to +-inf.
EMState em_step(DataView data, const EMState& s, double sigma);

/// Easy EM step: same weights, no covariance solve.
EMState easy_em_step(DataView data, const EMState& s, double sigma);

/// Noiseless E-step weight sgn(y * inner) with the tie y * inner = 0 resolved
/// as tanh(nu) (the sigma -> 0 limit of the tanh weight).
double noiseless_weight(double y, double inner, double nu);

/// Finite-sample negative log-likelihood (up to the covariate entropy term,
/// which is independent of (theta, nu) and cancels in all differences).
/// Requires sigma > 0 and finite nu; ln cosh is evaluated overflow-safe.
double nll(DataView data, const EMState& s, double sigma);

/// Relative residuals of the EM-as-gradient-step identity checked by central
/// finite differences of nll: M_n = theta - Cov^-1 sigma^2 grad_theta f_n and
/// N_n = tanh nu - grad_nu f_n. h is the relative step size.
struct GradientIdentityResiduals {
  double r_theta = 0.0;
  double r_nu = 0.0;
};
GradientIdentityResiduals nll_gradient_identity_check(DataView data, const EMState& s,
                                                      double sigma, double h);

/// Analytic NLL gradient magnitudes implied by the identity (zero exactly at
/// an EM fixed point).
struct NllGradient {
  Eigen::VectorXd theta;
  double nu = 0.0;
};
NllGradient nll_gradient(DataView data, const EMState& s, double sigma);

/// Sample-splitting Easy EM initialization: partitions the first t0*(n/t0)
/// rows into t0 disjoint folds and applies one Easy step per fold, starting
/// from `start` if given and from a random unit-theta state otherwise.
/// Throws when the folds would be empty (t0 > n).
EMState init_easy_split(const Dataset& ds, int t0, std::uint64_t seed, double sigma,
                        const std::optional<EMState>& start = std::nullopt);

/// Full staged run: optional sample-splitting init, t1 Easy iterations, then
/// standard EM up to t_standard_max. Early exit on phi <= eps_phi when gt is
/// supplied, and on a relative theta change <= 1e-12 otherwise. Records
/// diagnostics per iteration (including the initial state).
std::vector<TrajectoryRecord> run_em(const Dataset& ds, const EMState& s0, const Schedule& sched,
                                     double sigma, const GroundTruth* gt);

/// One-draw statistical errors of the Easy EM update against the population
/// update (noiseless closed forms when gt.sigma = 0, quadrature otherwise):
///   full      = ||M_n^easy - M|| / ||theta*||
///   projected = ||P_{span{theta, theta*}} (M_n^easy - M)|| / ||theta*||
///   weight    = |N_n - N|
struct StatisticalErrors {
  double full = 0.0;
  double projected = 0.0;
  double weight = 0.0;
};
StatisticalErrors statistical_error_sample(const Dataset& ds, const EMState& s,
                                           const GroundTruth& gt, const QuadratureSpec& quad);

}  // namespace mlrem
