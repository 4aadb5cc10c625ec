#include "crowdteacher/stats.hpp"

#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <stdexcept>

namespace crowdteacher {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("normal_quantile: p must lie in (0,1)");
  }
  static const boost::math::normal_distribution<double> unit_normal;
  return boost::math::quantile(unit_normal, p);
}

double sample_beta(std::mt19937_64& rng, double a, double b) {
  std::gamma_distribution<double> ga(a, 1.0);
  std::gamma_distribution<double> gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  return x / (x + y);
}

double sample_wald(std::mt19937_64& rng, double mean, double shape) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double nu = normal(rng);
  const double y = nu * nu;
  const double x = mean + mean * mean * y / (2.0 * shape) -
                   mean / (2.0 * shape) *
                       std::sqrt(4.0 * mean * shape * y + mean * mean * y * y);
  if (unif(rng) <= mean / (mean + x)) return x;
  return mean * mean / x;
}

double sample_laplace(std::mt19937_64& rng, double loc, double scale) {
  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  const double u = unif(rng);
  const double sign = u < 0.0 ? -1.0 : 1.0;
  return loc - scale * sign * std::log1p(-2.0 * std::abs(u));
}

}  // namespace crowdteacher
