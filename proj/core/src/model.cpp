#include "mlrem/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "mlrem/rng.hpp"

namespace mlrem {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

MixingImbalance MixingImbalance::from_nu(double nu) {
  if (std::isnan(nu)) throw std::invalid_argument("MixingImbalance: nu is NaN");
  MixingImbalance m;
  m.nu = nu;
  m.tanh_nu = std::isinf(nu) ? (nu > 0 ? 1.0 : -1.0) : std::tanh(nu);
  return m;
}

std::array<double, 2> weights_of_nu(double nu) {
  const double t = MixingImbalance::from_nu(nu).tanh_nu;
  return {0.5 * (1.0 + t), 0.5 * (1.0 - t)};
}

MixingImbalance nu_of_weights(double pi1) {
  if (!(pi1 >= 0.0 && pi1 <= 1.0)) {
    throw std::invalid_argument("nu_of_weights: pi1 must lie in [0, 1]");
  }
  MixingImbalance m;
  m.tanh_nu = 2.0 * pi1 - 1.0;
  if (pi1 == 1.0) {
    m.nu = kInf;
  } else if (pi1 == 0.0) {
    m.nu = -kInf;
  } else {
    m.nu = 0.5 * (std::log(pi1) - std::log1p(-pi1));
  }
  return m;
}

double GroundTruth::snr() const {
  if (sigma == 0.0) return theta_norm > 0.0 ? kInf : 0.0;
  return theta_norm / sigma;
}

GroundTruth make_ground_truth(Eigen::VectorXd theta_star, double pi1, double sigma) {
  if (theta_star.size() < 1) {
    throw std::invalid_argument("make_ground_truth: d must be >= 1");
  }
  if (!theta_star.allFinite()) {
    throw std::invalid_argument("make_ground_truth: theta_star must be finite");
  }
  if (!(pi1 >= 0.0 && pi1 <= 1.0)) {
    throw std::invalid_argument("make_ground_truth: pi1 must lie in [0, 1]");
  }
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw std::invalid_argument("make_ground_truth: sigma must be finite and >= 0");
  }
  GroundTruth gt;
  gt.theta_star = std::move(theta_star);
  gt.pi_star = {pi1, 1.0 - pi1};
  gt.sigma = sigma;
  gt.theta_norm = gt.theta_star.norm();
  const MixingImbalance m = nu_of_weights(pi1);
  gt.nu_star = m.nu;
  gt.tanh_nu_star = m.tanh_nu;
  return gt;
}

Dataset generate_dataset(const GroundTruth& gt, int n, std::uint64_t seed) {
  if (n < 0) throw std::invalid_argument("generate_dataset: n must be >= 0");
  const int d = gt.dim();
  Dataset ds;
  ds.seed = seed;
  ds.x.resize(n, d);
  ds.y.resize(n);
  ds.z_.resize(n);
  CounterRng rng = CounterRng::stream(seed, 0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) ds.x(i, j) = rng.next_gaussian();
    const int z = rng.next_label(gt.pi_star[0]);
    ds.z_[i] = static_cast<std::int8_t>(z);
    const double signal = ds.x.row(i).dot(gt.theta_star);
    double y = (z == 1) ? signal : -signal;
    if (gt.sigma > 0.0) y += gt.sigma * rng.next_gaussian();
    ds.y(i) = y;
  }
  return ds;
}

}  // namespace mlrem
