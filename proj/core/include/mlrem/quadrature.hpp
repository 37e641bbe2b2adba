#pragma once

#include <vector>

namespace mlrem {

/// Deterministic-quadrature budget for the population expectations, plus an
/// optional Monte Carlo cross-check budget used by verification routines.
struct QuadratureSpec {
  int nodes_per_axis = 128;
  long long mc_samples = 0;
  unsigned long long mc_seed = 0;

  /// Throws std::invalid_argument unless nodes_per_axis >= 16 (and
  /// mc_samples >= 10^4 when a Monte Carlo budget is requested).
  void validate() const;
};

/// Gauss-Hermite rule for the standard normal weight: sum_i w_i f(x_i)
/// approximates E[f(Z)], Z ~ N(0,1). Nodes/weights via Golub-Welsch, cached
/// per order. Thread-safe.
struct GaussHermite {
  static const std::vector<double>& nodes(int n);
  static const std::vector<double>& weights(int n);
};

/// Gauss-Legendre rule on [-1, 1] (weights sum to 2). Cached per order.
struct GaussLegendre {
  static const std::vector<double>& nodes(int n);
  static const std::vector<double>& weights(int n);
};

/// One-dimensional Gaussian moments of a shifted tanh:
///   t0 = E[tanh(a h + b)],  t1 = E[tanh(a h + b) h],  h ~ N(0,1).
/// For |a| below a threshold the integrand is smooth on the Gauss-Hermite
/// scale and is integrated directly; for larger |a| the sharp transition is
/// split off analytically,
///   tanh(t) = sgn(t) - sgn(t) * 2/(e^{2|t|} + 1),
/// leaving a closed-form step moment plus a boundary-layer correction that is
/// integrated on a fixed rule against the kernel 2/(e^{2t}+1). Accurate to
/// ~1e-14 uniformly in (a, b), including |a| up to 1e12 and saturated shifts.
struct TanhGaussMoments {
  double t0 = 0.0;
  double t1 = 0.0;
};

class TanhKernel {
 public:
  explicit TanhKernel(const QuadratureSpec& spec);

  TanhGaussMoments moments(double a, double b) const;

 private:
  const std::vector<double>* gh_nodes_;
  const std::vector<double>* gh_weights_;
};

/// Expectations over a correlated standard Gaussian pair (g, g') with
/// E[g g'] = sin_corr, evaluated by the substitution g' = sin_corr * g +
/// cos_corr * h with h independent of g. The inner h-integral uses
/// TanhKernel; the outer g-integral uses a composite Gauss-Legendre rule in
/// log|g|, which resolves both the O(1) scale of the Gaussian weight and the
/// O(1/A) transition layers that appear at extreme SNR. All integrands
/// handled here are even in g, so only g > 0 is quadratured.
class PairExpectation {
 public:
  explicit PairExpectation(const QuadratureSpec& spec);

  /// E[tanh(A g g' + shift) g g'] and E[tanh(A g g' + shift) g (g - sin_corr g')].
  struct TanhPairMoments {
    double m_gg = 0.0;
    double m_gperp = 0.0;
  };
  TanhPairMoments tanh_pair_moments(double A, double sin_corr, double shift) const;

  /// E[tanh(A g g' + shift)].
  double tanh_pair_mean(double A, double sin_corr, double shift) const;

  /// E[tanh(A X) X] with X = g g' for independent g, g' (the Bessel-product
  /// variable with density K_0(|x|)/pi).
  double tanh_product_moment(double A) const;

  /// Quadrature routes for the sign-product identities:
  /// E[sgn(g g')], E[|g g'|], E[g^2 sgn(g g')] at correlation sin(varphi).
  double sign_mean(double varphi) const;
  double abs_product(double varphi) const;
  double g2_sign(double varphi) const;

  /// E[X^{2n}] for X = g g' independent, by plain tensor Gauss-Hermite
  /// (smooth integrand).
  double product_even_moment(int n) const;

 private:
  TanhKernel kernel_;
  std::vector<double> outer_u_;  // positive g nodes (log-spaced panels)
  std::vector<double> outer_w_;  // weights including u * N(0,1) density * du
  const std::vector<double>* gh_nodes_;
  const std::vector<double>* gh_weights_;
};

/// Standard normal density and CDF.
double normal_pdf(double x);
double normal_cdf(double x);

}  // namespace mlrem
