#include "mlrem/population.hpp"

#include <cmath>
#include <stdexcept>

#include "mlrem/geometry.hpp"

namespace mlrem {

GeneralSnrContext GeneralSnrContext::make(double k, double varphi, double sgn_rho, double eta) {
  if (!(eta > 0.0) || std::isinf(eta)) {
    throw std::invalid_argument("GeneralSnrContext: eta must be finite and > 0");
  }
  GeneralSnrContext c;
  c.eta = eta;
  c.k = k;
  c.varphi = varphi;
  c.sgn_rho = sgn_rho;
  const double root = std::sqrt(1.0 + 1.0 / (eta * eta));
  c.a_eta = k * eta * eta * root;
  c.sin_varphi_eta = std::sin(varphi) / root;
  c.varphi_eta = std::asin(c.sin_varphi_eta);
  c.cos_varphi_eta = std::cos(c.varphi_eta);
  c.sin_ratio = root;  // sin(varphi)/sin(varphi_eta), valid at varphi = 0 too
  return c;
}

Eigen::VectorXd m_noiseless(const Eigen::VectorXd& theta, const GroundTruth& gt) {
  if (gt.degenerate()) throw std::invalid_argument("m_noiseless: theta* = 0");
  const double tn = theta.norm();
  if (tn == 0.0) return Eigen::VectorXd::Zero(theta.size());
  const AngleDiagnostics a = angle_diagnostics(theta, gt);
  return (2.0 / M_PI) * gt.theta_norm *
         (a.sgn_rho * a.varphi / gt.theta_norm * gt.theta_star + std::cos(a.varphi) / tn * theta);
}

double n_noiseless(const Eigen::VectorXd& theta, const GroundTruth& gt) {
  if (gt.degenerate()) throw std::invalid_argument("n_noiseless: theta* = 0");
  if (theta.norm() == 0.0) return 0.0;
  const AngleDiagnostics a = angle_diagnostics(theta, gt);
  return a.sgn_rho * (2.0 / M_PI) * a.varphi * gt.tanh_nu_star;
}

double recurrence_step(double varphi) {
  if (!(varphi >= 0.0 && varphi <= M_PI / 2.0)) {
    throw std::invalid_argument("recurrence_step: varphi must lie in [0, pi/2]");
  }
  if (varphi >= M_PI / 2.0) return M_PI / 2.0;  // absorbing
  const double t = std::tan(varphi);
  return std::atan(t + varphi * (t * t + 1.0));
}

PopulationRun run_population_noiseless(const Eigen::VectorXd& theta0, const GroundTruth& gt,
                                       const PopulationStop& stop) {
  if (gt.degenerate()) throw std::invalid_argument("run_population_noiseless: theta* = 0");
  if (theta0.norm() == 0.0) {
    throw std::invalid_argument("run_population_noiseless: theta0 = 0 is a fixed point");
  }
  PopulationRun run;
  run.saddle = (angle_diagnostics(theta0, gt).rho == 0.0);

  Eigen::VectorXd theta = theta0;
  double tanh_nu = 0.0;  // nu^0 = 0
  for (int t = 0; t <= stop.max_iters; ++t) {
    const AngleDiagnostics a = angle_diagnostics(theta, gt);
    TrajectoryRecord rec;
    rec.t = t;
    rec.varphi = a.varphi;
    rec.phi = a.phi;
    rec.theta_err = (theta - a.sgn_rho * gt.theta_star).norm() / gt.theta_norm;
    rec.weight_err = std::abs(tanh_nu - a.sgn_rho * gt.tanh_nu_star);
    rec.out_of_plane = 0.0;  // closed-form map stays in span{theta^0, theta*}
    run.records.push_back(rec);
    if (a.phi <= stop.eps_phi) {
      run.converged = true;
      break;
    }
    if (t == stop.max_iters) break;
    const double n_next = n_noiseless(theta, gt);
    theta = m_noiseless(theta, gt);
    tanh_nu = n_next;
  }
  return run;
}

namespace {

struct PairCoefficients {
  double c1 = 0.0;  // along e_1 = theta/||theta||
  double c2 = 0.0;  // along e_2 (Gram-Schmidt of theta* against e_1)
};

// e-frame coefficients of M(theta, nu)/||theta*|| and the scalar N(theta, nu)
// from the explicit expectations, mixing the latent label with weights pi*.
PairCoefficients m_coefficients(const GeneralSnrContext& ctx, double nu, const GroundTruth& gt,
                                const PairExpectation& pe) {
  PairCoefficients out;
  double i1 = 0.0, i2 = 0.0;
  for (int z = 1; z <= 2; ++z) {
    const double w = gt.pi_star[z - 1];
    if (w == 0.0) continue;
    const double shift = ctx.sgn_rho * (z == 1 ? nu : -nu);
    const auto m = pe.tanh_pair_moments(ctx.a_eta, ctx.sin_varphi_eta, shift);
    i1 += w * m.m_gg;
    i2 += w * m.m_gperp;
  }
  out.c1 = ctx.sin_ratio * i1;
  out.c2 = std::cos(ctx.varphi) / (ctx.cos_varphi_eta * ctx.cos_varphi_eta) * ctx.sgn_rho * i2;
  return out;
}

double n_value(const GeneralSnrContext& ctx, double nu, const GroundTruth& gt,
               const PairExpectation& pe) {
  double acc = 0.0;
  for (int z = 1; z <= 2; ++z) {
    const double w = gt.pi_star[z - 1];
    if (w == 0.0) continue;
    const double a_signed = (z == 1 ? ctx.a_eta : -ctx.a_eta);
    acc += w * pe.tanh_pair_mean(a_signed, ctx.sin_varphi_eta, ctx.sgn_rho * nu);
  }
  return ctx.sgn_rho * acc;
}

GeneralSnrContext context_of_state(const Eigen::VectorXd& theta, const GroundTruth& gt) {
  const double eta = gt.snr();
  if (!(eta > 0.0) || std::isinf(eta)) {
    throw std::invalid_argument("general-SNR update requires finite eta > 0 (use the noiseless closed forms otherwise)");
  }
  const AngleDiagnostics a = angle_diagnostics(theta, gt);
  return GeneralSnrContext::make(a.k, a.varphi, a.sgn_rho, eta);
}

}  // namespace

Eigen::VectorXd m_general(const Eigen::VectorXd& theta, double nu, const GroundTruth& gt,
                          const QuadratureSpec& quad) {
  quad.validate();
  if (gt.degenerate()) throw std::invalid_argument("m_general: theta* = 0");
  if (theta.norm() == 0.0) return Eigen::VectorXd::Zero(theta.size());
  const GeneralSnrContext ctx = context_of_state(theta, gt);
  const PairExpectation pe(quad);
  const PairCoefficients c = m_coefficients(ctx, nu, gt, pe);
  const PlaneFrame f = plane_frame(theta, gt);
  return gt.theta_norm * (c.c1 * f.e_1 + c.c2 * f.e_2);
}

double n_general(const Eigen::VectorXd& theta, double nu, const GroundTruth& gt,
                 const QuadratureSpec& quad) {
  quad.validate();
  if (gt.degenerate()) throw std::invalid_argument("n_general: theta* = 0");
  if (theta.norm() == 0.0) {
    return MixingImbalance::from_nu(nu).tanh_nu;  // N(0, nu) = E[tanh(nu)]
  }
  const GeneralSnrContext ctx = context_of_state(theta, gt);
  const PairExpectation pe(quad);
  return n_value(ctx, nu, gt, pe);
}

double m_norm_bound(const GroundTruth& gt) {
  const double eta = gt.snr();
  const double lead = std::isinf(eta) ? 1.0 : std::atan(eta) / (M_PI / 2.0);
  return lead * gt.theta_norm + (2.0 / M_PI) * gt.sigma;
}

double expect_tanh_ax_x(double A, const QuadratureSpec& quad) {
  quad.validate();
  if (!(A > 0.0)) throw std::invalid_argument("expect_tanh_ax_x: A must be > 0");
  return PairExpectation(quad).tanh_product_moment(A);
}

double k_star(double eta, const QuadratureSpec& quad, double tol) {
  quad.validate();
  if (!(eta > 0.0) || std::isinf(eta)) {
    throw std::invalid_argument("k_star: eta must be finite and > 0");
  }
  if (!(tol > 0.0)) throw std::invalid_argument("k_star: tol must be > 0");
  const PairExpectation pe(quad);
  const double root = std::sqrt(1.0 + 1.0 / (eta * eta));
  const auto objective = [&](double k) {
    return root * pe.tanh_product_moment(k * eta * eta * root) - k;
  };
  double lo = 0.5, hi = 1.05;
  double flo = objective(lo), fhi = objective(hi);
  if (!(flo > 0.0 && fhi < 0.0)) {
    throw std::runtime_error("k_star: bracket [0.5, 1.05] failed to change sign (quadrature under-resolution)");
  }
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (objective(mid) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double k = 0.5 * (lo + hi);
  const double upper = std::min(2.0 / M_PI * root, 1.0);
  if (!(k > 1.0 / std::sqrt(3.0) - tol && k < upper + tol)) {
    throw std::runtime_error("k_star: root escaped the analytic interval");
  }
  return k;
}

double deviation_from_limit(double k, double varphi, double eta, const QuadratureSpec& quad) {
  quad.validate();
  const GeneralSnrContext ctx = GeneralSnrContext::make(k, varphi, 1.0, eta);
  const PairExpectation pe(quad);
  GroundTruth balanced;
  balanced.pi_star = {0.5, 0.5};
  const PairCoefficients c = m_coefficients(ctx, 0.0, balanced, pe);
  const double lim_c1 = (2.0 / M_PI) * (varphi * std::sin(varphi) + std::cos(varphi));
  const double lim_c2 = (2.0 / M_PI) * varphi * std::cos(varphi);
  return std::hypot(c.c1 - lim_c1, c.c2 - lim_c2);
}

SignProductExpectations sign_product_expectations(double varphi) {
  if (!(varphi >= -M_PI / 2.0 && varphi <= M_PI / 2.0)) {
    throw std::invalid_argument("sign_product_expectations: varphi must lie in [-pi/2, pi/2]");
  }
  SignProductExpectations e;
  const double s = std::sin(varphi);
  const double c = std::cos(varphi);
  e.sign_mean = (2.0 / M_PI) * varphi;
  e.abs_product = (2.0 / M_PI) * (varphi * s + c);
  e.g2_sign = (2.0 / M_PI) * (varphi + s * c);
  return e;
}

SignProductExpectations sign_product_expectations_quadrature(double varphi,
                                                             const QuadratureSpec& quad) {
  quad.validate();
  const PairExpectation pe(quad);
  SignProductExpectations e;
  e.sign_mean = pe.sign_mean(varphi);
  e.abs_product = pe.abs_product(varphi);
  e.g2_sign = pe.g2_sign(varphi);
  return e;
}

double bessel_product_even_moment(int n, const QuadratureSpec& quad) {
  quad.validate();
  if (n < 1) throw std::invalid_argument("bessel_product_even_moment: n must be >= 1");
  return PairExpectation(quad).product_even_moment(n);
}

}  // namespace mlrem
