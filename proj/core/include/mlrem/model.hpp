#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <vector>

namespace mlrem {

/// Mixing-weight imbalance in the nu parameterization: tanh(nu) = pi(1) - pi(2).
/// nu = +-inf encodes the degenerate weights (1,0) / (0,1) so that tanh_nu is
/// exactly +-1 at the boundary.
struct MixingImbalance {
  double nu = 0.0;
  double tanh_nu = 0.0;

  static MixingImbalance from_nu(double nu);
};

/// pi(1) = (1 + tanh nu)/2, pi(2) = (1 - tanh nu)/2.
std::array<double, 2> weights_of_nu(double nu);

/// Inverse map; throws std::invalid_argument unless pi1 lies in [0, 1].
MixingImbalance nu_of_weights(double pi1);

/// True parameters of the symmetric two-component mixed linear regression
/// model y = (-1)^{z+1} <x, theta*> + sigma eps.
struct GroundTruth {
  Eigen::VectorXd theta_star;
  std::array<double, 2> pi_star{0.5, 0.5};
  double sigma = 0.0;

  double theta_norm = 0.0;
  double nu_star = 0.0;       // (ln pi*(1) - ln pi*(2)) / 2
  double tanh_nu_star = 0.0;  // pi*(1) - pi*(2)

  int dim() const { return static_cast<int>(theta_star.size()); }
  /// ||theta*|| / sigma; +inf when sigma = 0 and theta* != 0.
  double snr() const;
  bool noiseless() const { return sigma == 0.0; }
  /// theta* = 0 makes angles undefined; flagged rather than rejected.
  bool degenerate() const { return theta_norm == 0.0; }
};

GroundTruth make_ground_truth(Eigen::VectorXd theta_star, double pi1, double sigma);

/// Read-only view of the observed part of a dataset (a contiguous row range).
/// EM operations accept only this view, so the latent labels stay out of
/// reach of the estimator.
class DataView {
 public:
  DataView(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int begin, int count)
      : x_(&x), y_(&y), begin_(begin), count_(count) {}

  auto x() const { return x_->middleRows(begin_, count_); }
  auto y() const { return y_->segment(begin_, count_); }
  int n() const { return count_; }
  int d() const { return static_cast<int>(x_->cols()); }

  /// Sub-range relative to this view.
  DataView rows(int begin, int count) const {
    return DataView(*x_, *y_, begin_ + begin, count);
  }

 private:
  const Eigen::MatrixXd* x_;
  const Eigen::VectorXd* y_;
  int begin_;
  int count_;
};

/// n samples drawn from a GroundTruth. Immutable after construction; the
/// latent labels z are retained for diagnostics only and are not part of
/// view().
struct Dataset {
  Eigen::MatrixXd x;  // n x d covariates
  Eigen::VectorXd y;  // n responses
  std::uint64_t seed = 0;

  int n() const { return static_cast<int>(y.size()); }
  int d() const { return static_cast<int>(x.cols()); }
  DataView view() const { return DataView(x, y, 0, n()); }

  /// Latent component labels (values in {1,2}); diagnostics only.
  const std::vector<std::int8_t>& diagnostic_labels() const { return z_; }

  std::vector<std::int8_t> z_;  // filled at generation/deserialization time
};

/// x_i ~ N(0, I_d), z_i ~ CAT(pi*), y_i = (-1)^{z_i+1}<x_i, theta*> + sigma eps_i.
/// Deterministic given (gt, n, seed).
Dataset generate_dataset(const GroundTruth& gt, int n, std::uint64_t seed);

}  // namespace mlrem
