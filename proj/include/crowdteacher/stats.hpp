#pragma once

#include <random>

namespace crowdteacher {

// Standard normal CDF.
double normal_cdf(double z);

// Standard normal quantile. Requires p in (0,1).
double normal_quantile(double p);

// Beta(a,b) draw via two gamma variates.
double sample_beta(std::mt19937_64& rng, double a, double b);

// Inverse Gaussian draw (Michael-Schucany-Haas transform). mean, shape > 0.
double sample_wald(std::mt19937_64& rng, double mean, double shape);

// Laplace draw by inverse CDF.
double sample_laplace(std::mt19937_64& rng, double loc, double scale);

}  // namespace crowdteacher
