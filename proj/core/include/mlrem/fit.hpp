#pragma once

#include <utility>
#include <vector>

namespace mlrem {

/// Ordinary least squares of ln(y) on ln(x).
/// stderr_slope is the usual OLS standard error; it is +inf for exactly
/// three collinear-degenerate points cases where the residual dof is 0.
struct LogLogFit {
  double slope = 0.0;
  double intercept = 0.0;
  double stderr_slope = 0.0;
};

/// Requires at least 3 points with x > 0, y > 0 and non-degenerate x spread;
/// throws std::invalid_argument otherwise.
LogLogFit fit_loglog_slope(const std::vector<std::pair<double, double>>& points);

}  // namespace mlrem
