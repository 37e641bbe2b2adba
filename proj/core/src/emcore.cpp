#include "mlrem/emcore.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "mlrem/geometry.hpp"
#include "mlrem/population.hpp"
#include "mlrem/rng.hpp"

namespace mlrem {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// tanh saturates below double precision past |t| ~ 20; past 40 the sgn
// specialization is exact and avoids the transcendental entirely.
double tanh_weight(double arg) {
  if (arg > 40.0) return 1.0;
  if (arg < -40.0) return -1.0;
  return std::tanh(arg);
}

// E-step weights w_i; shared by both update rules and the NLL pieces.
Eigen::VectorXd estep_weights(DataView data, const EMState& s, double sigma) {
  const auto x = data.x();
  const auto y = data.y();
  const int n = data.n();
  Eigen::VectorXd w(n);
  const double tnu = s.tanh_nu();
  if (sigma == 0.0) {
    const Eigen::VectorXd inner = x * s.theta;
    for (int i = 0; i < n; ++i) w(i) = noiseless_weight(y(i), inner(i), s.nu);
    return w;
  }
  if (std::isinf(s.nu)) {
    w.setConstant(tnu);
    return w;
  }
  const double inv_s2 = 1.0 / (sigma * sigma);
  const Eigen::VectorXd arg = (y.array() * (x * s.theta).array()).matrix() * inv_s2;
  for (int i = 0; i < n; ++i) w(i) = tanh_weight(arg(i) + s.nu);
  return w;
}

double clamp_to_nu(double n_n) {
  if (n_n >= 1.0 - 1e-15) return kInf;
  if (n_n <= -1.0 + 1e-15) return -kInf;
  return std::atanh(n_n);
}

// theta part of the Easy update: (1/n) sum w_i y_i x_i.
Eigen::VectorXd easy_theta(DataView data, const Eigen::VectorXd& w) {
  const auto x = data.x();
  const auto y = data.y();
  return x.transpose() * (w.array() * y.array()).matrix() / data.n();
}

double lncosh(double a) {
  // |a| + log(1 + e^{-2|a|}) - log 2, finite for any a.
  const double aa = std::abs(a);
  return aa + std::log1p(std::exp(-2.0 * aa)) - M_LN2;
}

}  // namespace

double EMState::tanh_nu() const { return MixingImbalance::from_nu(nu).tanh_nu; }

double noiseless_weight(double y, double inner, double nu) {
  const double p = y * inner;
  if (p > 0.0) return 1.0;
  if (p < 0.0) return -1.0;
  return MixingImbalance::from_nu(nu).tanh_nu;  // tie: the tanh limit
}

EMState em_step(DataView data, const EMState& s, double sigma) {
  const int n = data.n();
  const int d = data.d();
  if (n < d) {
    std::ostringstream msg;
    msg << "em_step: need n >= d samples for the covariance solve (n = " << n << ", d = " << d
        << ")";
    throw std::invalid_argument(msg.str());
  }
  const auto x = data.x();
  const Eigen::MatrixXd cov = x.transpose() * x / n;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const double lmin = es.eigenvalues().minCoeff();
  const double lmax = es.eigenvalues().maxCoeff();
  if (!(lmin > 0.0) || lmax / lmin > 1e12) {
    std::ostringstream msg;
    msg << "em_step: sample covariance ill-conditioned (n = " << n << ", d = " << d
        << ", condition = " << (lmin > 0.0 ? lmax / lmin : kInf) << ")";
    throw std::runtime_error(msg.str());
  }
  const Eigen::VectorXd w = estep_weights(data, s, sigma);
  EMState next;
  next.theta = Eigen::LDLT<Eigen::MatrixXd>(cov).solve(easy_theta(data, w));
  next.nu = clamp_to_nu(w.mean());
  return next;
}

EMState easy_em_step(DataView data, const EMState& s, double sigma) {
  if (data.n() < 1) throw std::invalid_argument("easy_em_step: empty data");
  const Eigen::VectorXd w = estep_weights(data, s, sigma);
  EMState next;
  next.theta = easy_theta(data, w);
  next.nu = clamp_to_nu(w.mean());
  return next;
}

double nll(DataView data, const EMState& s, double sigma) {
  if (!(sigma > 0.0)) throw std::domain_error("nll: undefined for sigma = 0");
  if (std::isinf(s.nu)) throw std::domain_error("nll: requires finite nu");
  const auto x = data.x();
  const auto y = data.y();
  const int n = data.n();
  const double inv_s2 = 1.0 / (sigma * sigma);
  const Eigen::VectorXd inner = x * s.theta;
  const double quad_term = 0.5 * inv_s2 * inner.squaredNorm() / n;
  double cosh_term = 0.0;
  const double lc_nu = lncosh(s.nu);
  for (int i = 0; i < n; ++i) {
    cosh_term += lncosh(y(i) * inner(i) * inv_s2 + s.nu) - lc_nu;
  }
  const double c_n = 0.5 * inv_s2 * y.squaredNorm() / n + 0.5 * std::log(2.0 * M_PI * sigma * sigma);
  return quad_term - cosh_term / n + c_n;
}

NllGradient nll_gradient(DataView data, const EMState& s, double sigma) {
  if (!(sigma > 0.0)) throw std::domain_error("nll_gradient: undefined for sigma = 0");
  const int n = data.n();
  const auto x = data.x();
  const Eigen::MatrixXd cov = x.transpose() * x / n;
  const Eigen::VectorXd w = estep_weights(data, s, sigma);
  NllGradient g;
  // grad_theta f_n = (Cov theta - (1/n) sum w_i y_i x_i) / sigma^2
  g.theta = (cov * s.theta - easy_theta(data, w)) / (sigma * sigma);
  // grad_nu f_n = tanh(nu) - N_n
  g.nu = s.tanh_nu() - w.mean();
  return g;
}

GradientIdentityResiduals nll_gradient_identity_check(DataView data, const EMState& s,
                                                      double sigma, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("nll_gradient_identity_check: h must be > 0");
  const NllGradient analytic = nll_gradient(data, s, sigma);
  const int d = static_cast<int>(s.theta.size());

  Eigen::VectorXd numeric(d);
  for (int j = 0; j < d; ++j) {
    const double step = h * std::max(1.0, std::abs(s.theta(j)));
    EMState plus = s, minus = s;
    plus.theta(j) += step;
    minus.theta(j) -= step;
    numeric(j) = (nll(data, plus, sigma) - nll(data, minus, sigma)) / (2.0 * step);
  }
  const double step_nu = h * std::max(1.0, std::abs(s.nu));
  EMState plus = s, minus = s;
  plus.nu += step_nu;
  minus.nu -= step_nu;
  const double numeric_nu = (nll(data, plus, sigma) - nll(data, minus, sigma)) / (2.0 * step_nu);

  GradientIdentityResiduals r;
  r.r_theta = (numeric - analytic.theta).norm() / (1.0 + analytic.theta.norm());
  r.r_nu = std::abs(numeric_nu - analytic.nu) / (1.0 + std::abs(analytic.nu));
  return r;
}

EMState init_easy_split(const Dataset& ds, int t0, std::uint64_t seed, double sigma,
                        const std::optional<EMState>& start) {
  EMState state;
  if (start.has_value()) {
    state = *start;
  } else {
    CounterRng rng = CounterRng::stream(seed, 0x1417);
    state.theta.resize(ds.d());
    for (int j = 0; j < ds.d(); ++j) state.theta(j) = rng.next_gaussian();
    state.theta.normalize();
    state.nu = 0.0;
  }
  if (t0 == 0) return state;
  if (t0 < 0) throw std::invalid_argument("init_easy_split: t0 must be >= 0");
  const int fold = ds.n() / t0;
  if (fold < 1) {
    std::ostringstream msg;
    msg << "init_easy_split: need at least " << t0 << " samples for " << t0
        << " disjoint folds (n = " << ds.n() << ")";
    throw std::invalid_argument(msg.str());
  }
  const DataView all = ds.view();
  for (int t = 0; t < t0; ++t) {
    state = easy_em_step(all.rows(t * fold, fold), state, sigma);
  }
  return state;
}

std::vector<TrajectoryRecord> run_em(const Dataset& ds, const EMState& s0, const Schedule& sched,
                                     double sigma, const GroundTruth* gt) {
  if (sched.t0_easy_init < 0 || sched.t1_easy < 0 || sched.t_standard_max < 0) {
    throw std::invalid_argument("run_em: schedule counts must be >= 0");
  }
  const DataView data = ds.view();
  std::optional<PlaneFrame> frame0;
  if (gt != nullptr && !gt->degenerate() && s0.theta.norm() > 0.0) {
    frame0 = plane_frame(s0.theta, *gt);
  }

  const auto record = [&](int t, const EMState& s) {
    TrajectoryRecord rec;
    rec.t = t;
    if (gt != nullptr && !gt->degenerate()) {
      const AngleDiagnostics a = angle_diagnostics(s.theta, *gt);
      rec.varphi = a.varphi;
      rec.phi = a.phi;
      rec.theta_err = (s.theta - a.sgn_rho * gt->theta_star).norm() / gt->theta_norm;
      rec.weight_err = std::abs(s.tanh_nu() - a.sgn_rho * gt->tanh_nu_star);
      if (frame0.has_value()) {
        rec.out_of_plane = plane_coordinates(s.theta, *gt, *frame0).out_of_plane;
      }
    } else {
      rec.varphi = rec.phi = rec.theta_err = rec.weight_err = rec.out_of_plane = kNan;
    }
    if (sigma > 0.0 && !std::isinf(s.nu)) rec.nll = nll(data, s, sigma);
    return rec;
  };

  std::vector<TrajectoryRecord> records;
  EMState state = sched.t0_easy_init > 0
                      ? init_easy_split(ds, sched.t0_easy_init, ds.seed, sigma, s0)
                      : s0;
  records.push_back(record(0, state));

  int t = 0;
  const int total_max = sched.t1_easy + sched.t_standard_max;
  while (t < total_max) {
    const bool easy_phase = t < sched.t1_easy;
    EMState next = easy_phase ? easy_em_step(data, state, sigma) : em_step(data, state, sigma);
    ++t;
    records.push_back(record(t, next));
    bool stop = false;
    if (gt != nullptr && !gt->degenerate() && sched.eps_phi > 0.0) {
      stop = records.back().phi <= sched.eps_phi;
    } else if (state.theta.norm() > 0.0) {
      stop = (next.theta - state.theta).norm() / state.theta.norm() <= 1e-12;
    }
    state = next;
    if (stop) break;
  }
  return records;
}

StatisticalErrors statistical_error_sample(const Dataset& ds, const EMState& s,
                                           const GroundTruth& gt, const QuadratureSpec& quad) {
  if (gt.degenerate()) {
    throw std::invalid_argument("statistical_error_sample: theta* = 0");
  }
  const Eigen::VectorXd m_pop = gt.noiseless() ? m_noiseless(s.theta, gt)
                                               : m_general(s.theta, s.nu, gt, quad);
  const double n_pop = gt.noiseless() ? n_noiseless(s.theta, gt)
                                      : n_general(s.theta, s.nu, gt, quad);
  const EMState easy = easy_em_step(ds.view(), s, gt.sigma);
  const Eigen::VectorXd diff = easy.theta - m_pop;

  StatisticalErrors err;
  err.full = diff.norm() / gt.theta_norm;
  const PlaneFrame f = plane_frame(s.theta, gt);
  const double a = diff.dot(f.e_hat_1);
  const double b = diff.dot(f.e_hat_2);
  err.projected = std::hypot(a, b) / gt.theta_norm;
  err.weight = std::abs(easy.tanh_nu() - n_pop);
  return err;
}

}  // namespace mlrem
