#include "mlrem/quadrature.hpp"

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace mlrem {

namespace {

struct Rule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Golub-Welsch: nodes are eigenvalues of the Jacobi matrix, weights are
// mu_0 * (first eigenvector component)^2.
Rule golub_welsch(const std::vector<double>& beta, double mu0) {
  const int n = static_cast<int>(beta.size()) + 1;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i + 1 < n; ++i) {
    J(i, i + 1) = beta[i];
    J(i + 1, i) = beta[i];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  Rule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    r.nodes[i] = es.eigenvalues()(i);
    const double v = es.eigenvectors()(0, i);
    r.weights[i] = mu0 * v * v;
  }
  return r;
}

const Rule& hermite_rule(int n) {
  static std::mutex mtx;
  static std::map<int, Rule> cache;
  std::scoped_lock lock(mtx);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<double> beta(n - 1);
  for (int k = 1; k < n; ++k) beta[k - 1] = std::sqrt(static_cast<double>(k));
  return cache.emplace(n, golub_welsch(beta, 1.0)).first->second;
}

const Rule& legendre_rule(int n) {
  static std::mutex mtx;
  static std::map<int, Rule> cache;
  std::scoped_lock lock(mtx);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<double> beta(n - 1);
  for (int k = 1; k < n; ++k) beta[k - 1] = k / std::sqrt(4.0 * k * k - 1.0);
  return cache.emplace(n, golub_welsch(beta, 2.0)).first->second;
}

// Fixed rule for the boundary-layer corrections: nodes t_i > 0 with weights
// that already include the kernel 2/(e^{2t}+1). The kernel is below 3e-22
// past t = 26.
struct CorrectionRule {
  std::vector<double> t;
  std::vector<double> w;
};

const CorrectionRule& correction_rule() {
  static const CorrectionRule rule = [] {
    CorrectionRule r;
    const double edges[] = {0.0, 1.0, 3.0, 7.0, 15.0, 26.0};
    const Rule& gl = legendre_rule(32);
    for (int p = 0; p + 1 < 6; ++p) {
      const double mid = 0.5 * (edges[p] + edges[p + 1]);
      const double half = 0.5 * (edges[p + 1] - edges[p]);
      for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
        const double t = mid + half * gl.nodes[i];
        r.t.push_back(t);
        r.w.push_back(half * gl.weights[i] * 2.0 / (std::exp(2.0 * t) + 1.0));
      }
    }
    return r;
  }();
  return rule;
}

// |a| below this: direct Gauss-Hermite in h (tanh(a h + b) has poles at
// distance pi/(2|a|) >= pi/2 off the real axis, well inside the rule's
// convergence strip).
constexpr double kKernelSwitch = 1.0;

}  // namespace

void QuadratureSpec::validate() const {
  if (nodes_per_axis < 16) {
    throw std::invalid_argument("QuadratureSpec: nodes_per_axis must be >= 16");
  }
  if (mc_samples != 0 && mc_samples < 10000) {
    throw std::invalid_argument("QuadratureSpec: mc_samples must be >= 10^4 when used");
  }
}

const std::vector<double>& GaussHermite::nodes(int n) { return hermite_rule(n).nodes; }
const std::vector<double>& GaussHermite::weights(int n) { return hermite_rule(n).weights; }
const std::vector<double>& GaussLegendre::nodes(int n) { return legendre_rule(n).nodes; }
const std::vector<double>& GaussLegendre::weights(int n) { return legendre_rule(n).weights; }

double normal_pdf(double x) { return std::exp(-0.5 * x * x) * 0.3989422804014326779; }
double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

TanhKernel::TanhKernel(const QuadratureSpec& spec)
    : gh_nodes_(&GaussHermite::nodes(spec.nodes_per_axis)),
      gh_weights_(&GaussHermite::weights(spec.nodes_per_axis)) {}

TanhGaussMoments TanhKernel::moments(double a, double b) const {
  TanhGaussMoments m;
  if (std::isinf(b)) {  // saturated shift (nu = +-inf)
    m.t0 = b > 0 ? 1.0 : -1.0;
    m.t1 = 0.0;
    return m;
  }
  const double sa = a >= 0 ? 1.0 : -1.0;
  const double aa = std::abs(a);
  if (aa <= kKernelSwitch) {
    double t0 = 0.0, t1 = 0.0;
    const auto& xs = *gh_nodes_;
    const auto& ws = *gh_weights_;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double th = std::tanh(a * xs[i] + b);
      t0 += ws[i] * th;
      t1 += ws[i] * th * xs[i];
    }
    m.t0 = t0;
    m.t1 = t1;
    return m;
  }
  // Step moments: E[sgn(a h + b)] and E[sgn(a h + b) h].
  const double r = b / aa;
  m.t0 = 2.0 * normal_cdf(r) - 1.0;
  m.t1 = sa * 2.0 * normal_pdf(r);
  // Boundary-layer corrections against 2/(e^{2t}+1), t = |a| h' + b.
  const auto& cr = correction_rule();
  double j0 = 0.0, j1 = 0.0;
  for (std::size_t i = 0; i < cr.t.size(); ++i) {
    const double hm = (cr.t[i] - b) / aa;
    const double hp = (cr.t[i] + b) / aa;
    const double pm = normal_pdf(hm);
    const double pp = normal_pdf(hp);
    j0 += cr.w[i] * (pm - pp);
    j1 += cr.w[i] * (pm * hm + pp * hp);
  }
  m.t0 -= j0 / aa;
  m.t1 -= sa * j1 / aa;
  return m;
}

PairExpectation::PairExpectation(const QuadratureSpec& spec)
    : kernel_(spec),
      gh_nodes_(&GaussHermite::nodes(spec.nodes_per_axis)),
      gh_weights_(&GaussHermite::weights(spec.nodes_per_axis)) {
  spec.validate();
  // Composite Gauss-Legendre in v = ln u over [ln 1e-18, ln 8.75]. The
  // truncated tails contribute below 1e-18 for every integrand used here.
  const int panels = 64;
  const int per_panel = std::max(12, spec.nodes_per_axis / 8);
  const double vlo = std::log(1e-18);
  const double vhi = std::log(8.75);
  const Rule& gl = legendre_rule(per_panel);
  outer_u_.reserve(panels * per_panel);
  outer_w_.reserve(panels * per_panel);
  for (int p = 0; p < panels; ++p) {
    const double a = vlo + (vhi - vlo) * p / panels;
    const double b = vlo + (vhi - vlo) * (p + 1) / panels;
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
      const double u = std::exp(mid + half * gl.nodes[i]);
      outer_u_.push_back(u);
      outer_w_.push_back(half * gl.weights[i] * u * normal_pdf(u));
    }
  }
}

PairExpectation::TanhPairMoments PairExpectation::tanh_pair_moments(double A, double sin_corr,
                                                                    double shift) const {
  const double s = sin_corr;
  const double c = std::sqrt(std::max(0.0, 1.0 - s * s));
  TanhPairMoments out;
  // g g' = s u^2 + c u h and g (g - s g') = c (c u^2 - s u h); both products
  // of the T0/T1 moments are even in u.
  for (std::size_t i = 0; i < outer_u_.size(); ++i) {
    const double u = outer_u_[i];
    const auto m = kernel_.moments(c * A * u, s * A * u * u + shift);
    out.m_gg += outer_w_[i] * (s * u * u * m.t0 + c * u * m.t1);
    out.m_gperp += outer_w_[i] * c * (c * u * u * m.t0 - s * u * m.t1);
  }
  out.m_gg *= 2.0;
  out.m_gperp *= 2.0;
  return out;
}

double PairExpectation::tanh_pair_mean(double A, double sin_corr, double shift) const {
  const double s = sin_corr;
  const double c = std::sqrt(std::max(0.0, 1.0 - s * s));
  double acc = 0.0;
  for (std::size_t i = 0; i < outer_u_.size(); ++i) {
    const double u = outer_u_[i];
    acc += outer_w_[i] * kernel_.moments(c * A * u, s * A * u * u + shift).t0;
  }
  return 2.0 * acc;
}

double PairExpectation::tanh_product_moment(double A) const {
  double acc = 0.0;
  for (std::size_t i = 0; i < outer_u_.size(); ++i) {
    const double u = outer_u_[i];
    acc += outer_w_[i] * u * kernel_.moments(A * u, 0.0).t1;
  }
  return 2.0 * acc;
}

double PairExpectation::sign_mean(double varphi) const {
  const double s = std::sin(varphi);
  const double c = std::cos(varphi);
  if (c < 1e-12) return varphi > 0 ? 1.0 : -1.0;  // g' = +-g
  double acc = 0.0;
  for (std::size_t i = 0; i < outer_u_.size(); ++i) {
    const double u = outer_u_[i];
    acc += outer_w_[i] * (2.0 * normal_cdf(s * u / c) - 1.0);
  }
  return 2.0 * acc;
}

double PairExpectation::abs_product(double varphi) const {
  const double s = std::sin(varphi);
  const double c = std::cos(varphi);
  if (c < 1e-12) return 1.0;  // E[g^2]
  double acc = 0.0;
  for (std::size_t i = 0; i < outer_u_.size(); ++i) {
    const double u = outer_u_[i];
    const double r = s * u / c;
    // E_h[sgn(s u + c h)(s u + c h)] = s u (2 Phi(r) - 1) + 2 c pdf(r)
    acc += outer_w_[i] * u * (s * u * (2.0 * normal_cdf(r) - 1.0) + 2.0 * c * normal_pdf(r));
  }
  return 2.0 * acc;
}

double PairExpectation::g2_sign(double varphi) const {
  const double s = std::sin(varphi);
  const double c = std::cos(varphi);
  if (c < 1e-12) return varphi > 0 ? 1.0 : -1.0;  // E[g^2 sgn(g^2)]
  double acc = 0.0;
  for (std::size_t i = 0; i < outer_u_.size(); ++i) {
    const double u = outer_u_[i];
    acc += outer_w_[i] * u * u * (2.0 * normal_cdf(s * u / c) - 1.0);
  }
  return 2.0 * acc;
}

double PairExpectation::product_even_moment(int n) const {
  const auto& xs = *gh_nodes_;
  const auto& ws = *gh_weights_;
  double m = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    m += ws[i] * std::pow(xs[i], 2 * n);
  }
  return m * m;  // E[(g g')^{2n}] = E[g^{2n}] E[g'^{2n}]
}

}  // namespace mlrem
