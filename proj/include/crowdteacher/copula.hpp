#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "crowdteacher/tabular.hpp"

namespace crowdteacher {

// Per-column marginal of a fitted copula. Continuous columns keep their
// sorted training values; discrete columns keep category frequencies as
// contiguous sub-intervals of [0,1] in vocabulary order.
struct ColumnMarginal {
  ColumnKind kind = ColumnKind::Continuous;
  bool constant = false;              // single distinct value in the fit data
  std::vector<double> sorted_values;  // continuous: ascending training values
  std::vector<double> cumulative;     // discrete: cumulative frequencies, back() == 1
};

struct CopulaModel {
  FeatureSchema schema;
  std::vector<ColumnMarginal> marginals;
  Eigen::MatrixXd correlation;  // M x M latent Gaussian correlation, positive definite
  Eigen::MatrixXd cholesky;     // lower-triangular factor of correlation

  void validate() const;
};

using SyntheticPool = Dataset;

// Fits marginals and the latent correlation: Pearson correlation of per-column
// normal scores (continuous: quantile of midrank/(N+1); discrete: quantile of
// the category interval's midpoint), shifted toward identity just enough to be
// positive definite. Constant columns are memorized and excluded from the
// correlation. Throws if the only column is constant.
CopulaModel fit_copula(const Dataset& d);

// Draws n rows: z ~ N(0, correlation) via the Cholesky factor, u = Phi(z),
// then per column the interpolated empirical quantile (continuous) or the
// category whose interval contains u (discrete). Deterministic given seed.
SyntheticPool sample_copula(const CopulaModel& m, int n, std::uint64_t seed);

// Precomputed state for repeated nearest-neighbour queries against one pool.
// Continuous scales are fitted on the pool; zero-variance columns scale by 1.
struct KnnQueryContext {
  const Dataset* pool = nullptr;
  std::vector<int> continuous_cols;
  std::vector<int> discrete_cols;
  Eigen::VectorXd scale;  // per pool column, 1 on discrete columns
};

KnnQueryContext make_knn_context(const Dataset& pool);

// Squared Euclidean over pool-standardized continuous features plus Hamming
// mismatch count over discrete features.
double mixed_distance(const KnnQueryContext& ctx, const Eigen::RowVectorXd& x,
                      int pool_row);

// The k = max(1, round(fraction * N_s)) nearest pool rows in ascending
// (distance, row index) order; distance ties break toward the lower index.
std::vector<int> knn_candidate_indices(const KnnQueryContext& ctx,
                                       const Eigen::RowVectorXd& x,
                                       double fraction);

// Uniform choice among knn_candidate_indices(ctx, x, fraction).
int select_source_index(const KnnQueryContext& ctx, const Eigen::RowVectorXd& x,
                        double fraction, std::uint64_t seed);

Eigen::RowVectorXd select_perturbation_source(const KnnQueryContext& ctx,
                                              const Eigen::RowVectorXd& x,
                                              double fraction, std::uint64_t seed);
Eigen::RowVectorXd select_perturbation_source(const Eigen::RowVectorXd& x,
                                              const Dataset& pool, double fraction,
                                              std::uint64_t seed);

}  // namespace crowdteacher
