#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "crowdteacher/tabular.hpp"

namespace crowdteacher {

enum class FeatureFamily {
  Normal,
  Beta,
  Wald,
  Laplace,
  Binomial,
  Multinomial,  // realized as one categorical column with Dirichlet(1) probabilities
  Geometric,
  Poisson,
};

const char* family_name(FeatureFamily f);
bool family_is_continuous(FeatureFamily f);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};
struct IntRange {
  int lo = 0;
  int hi = 0;
};

// Per-family parameter sampling ranges; parameters are drawn uniformly.
struct ParamRanges {
  Range normal_mu{-2.0, 2.0};
  Range normal_sigma{0.5, 2.0};
  Range beta_a{0.5, 5.0};
  Range beta_b{0.5, 5.0};
  Range wald_mu{0.5, 3.0};
  Range wald_lambda{0.5, 3.0};
  Range laplace_loc{-2.0, 2.0};
  Range laplace_scale{0.5, 2.0};
  IntRange binomial_n{5, 20};
  Range binomial_p{0.2, 0.8};
  IntRange multinomial_categories{3, 6};
  Range geometric_p{0.1, 0.6};
  Range poisson_lambda{1.0, 10.0};
};

struct DataGenConfig {
  int features_per_family = 5;  // 8 families -> 40 columns by default
  int n_samples = 2000;
  double balance = 0.5;    // positive-class fraction, in (0,1)
  double noise_pct = 0.0;  // share of labels flipped for the noisy truth, in [0,1)
  int poly_degree = 2;     // 1 linear pass + (poly_degree-1) interaction rounds
  ParamRanges param_ranges;
  std::uint64_t seed = 0;
};

struct ColumnAudit {
  FeatureFamily family = FeatureFamily::Normal;
  std::vector<std::pair<std::string, double>> params;
  std::vector<double> category_probs;  // multinomial only
};

struct PolyTerm {
  int a = 0;
  int b = 0;
  double coeff = 0.0;
};

struct GenAudit {
  std::vector<ColumnAudit> columns;
  std::vector<double> linear_coeffs;    // one per column
  std::vector<PolyTerm> interactions;   // floor(M/2) per extra degree round
  double score_threshold = 0.0;         // score at the positive/negative split
  int flips = 0;                        // noisy-truth flip count
};

struct GeneratedData {
  Dataset data;
  GenAudit audit;
};

// Draws each column's family parameters and values, scores rows with a random
// polynomial over standardized cell values, marks the lowest balance-percentile
// scores positive, and flips ceil(noise_pct * N) labels for the noisy truth.
GeneratedData generate(const DataGenConfig& cfg);

void save_audit_json(const GenAudit& a, const std::string& path);

}  // namespace crowdteacher
