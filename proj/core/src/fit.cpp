#include "mlrem/fit.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mlrem {

LogLogFit fit_loglog_slope(const std::vector<std::pair<double, double>>& points) {
  const int n = static_cast<int>(points.size());
  if (n < 3) throw std::invalid_argument("fit_loglog_slope: need at least 3 points");
  double sx = 0.0, sy = 0.0;
  for (const auto& [x, y] : points) {
    if (!(x > 0.0) || !(y > 0.0)) {
      throw std::invalid_argument("fit_loglog_slope: points must be strictly positive");
    }
    sx += std::log(x);
    sy += std::log(y);
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [x, y] : points) {
    const double dx = std::log(x) - mx;
    const double dy = std::log(y) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (!(sxx > 0.0)) {
    throw std::invalid_argument("fit_loglog_slope: degenerate x values (no spread)");
  }
  LogLogFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  const double ssr = std::max(0.0, syy - f.slope * sxy);
  if (n > 2) {
    f.stderr_slope = std::sqrt(ssr / (n - 2) / sxx);
  } else {
    f.stderr_slope = std::numeric_limits<double>::infinity();
  }
  return f;
}

}  // namespace mlrem
