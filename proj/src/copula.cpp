#include "crowdteacher/copula.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "crowdteacher/rng.hpp"
#include "crowdteacher/stats.hpp"

namespace crowdteacher {

namespace {

// Average 1-based rank per element, ties sharing their group mean.
std::vector<double> midranks(const Eigen::VectorXd& v) {
  const int n = static_cast<int>(v.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return v(a) < v(b); });
  std::vector<double> rank(n);
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && v(order[j + 1]) == v(order[i])) ++j;
    const double r = 0.5 * (i + 1 + j + 1);
    for (int t = i; t <= j; ++t) rank[order[t]] = r;
    i = j + 1;
  }
  return rank;
}

double invert_marginal(const ColumnMarginal& marg, double u) {
  if (marg.kind == ColumnKind::Continuous) {
    const auto& v = marg.sorted_values;
    const int n = static_cast<int>(v.size());
    const double t = u * (n + 1);
    if (t <= 1.0) return v.front();
    if (t >= n) return v.back();
    const int k = static_cast<int>(t);  // 1-based lower order statistic
    const double frac = t - k;
    return v[k - 1] + frac * (v[k] - v[k - 1]);
  }
  for (std::size_t c = 0; c < marg.cumulative.size(); ++c) {
    if (u < marg.cumulative[c]) return static_cast<double>(c);
  }
  return static_cast<double>(marg.cumulative.size() - 1);
}

}  // namespace

void CopulaModel::validate() const {
  const Eigen::Index m = correlation.rows();
  if (correlation.cols() != m || static_cast<Eigen::Index>(marginals.size()) != m) {
    throw std::logic_error("copula model shape mismatch");
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    if (std::abs(correlation(i, i) - 1.0) > 1e-9) {
      throw std::logic_error("correlation diagonal is not 1");
    }
    for (Eigen::Index j = 0; j < i; ++j) {
      if (std::abs(correlation(i, j) - correlation(j, i)) > 1e-9) {
        throw std::logic_error("correlation is not symmetric");
      }
    }
  }
  for (const auto& marg : marginals) {
    if (marg.kind == ColumnKind::Discrete &&
        std::abs(marg.cumulative.back() - 1.0) > 1e-9) {
      throw std::logic_error("discrete interval widths do not sum to 1");
    }
  }
}

CopulaModel fit_copula(const Dataset& d) {
  d.validate();
  const int n = d.num_rows();
  const int m = d.schema.num_columns();
  if (n < 2) throw std::invalid_argument("copula fit needs at least 2 samples");
  if (m < 1) throw std::invalid_argument("copula fit needs at least one column");

  CopulaModel model;
  model.schema = d.schema;
  model.marginals.resize(static_cast<std::size_t>(m));

  Eigen::MatrixXd scores(n, m);
  std::vector<bool> degenerate(static_cast<std::size_t>(m), false);
  for (int j = 0; j < m; ++j) {
    auto& marg = model.marginals[static_cast<std::size_t>(j)];
    marg.kind = d.schema.columns[static_cast<std::size_t>(j)].kind;
    const Eigen::VectorXd col = d.features.col(j);
    marg.constant = (col.maxCoeff() == col.minCoeff());
    if (marg.kind == ColumnKind::Continuous) {
      marg.sorted_values.assign(col.data(), col.data() + n);
      std::sort(marg.sorted_values.begin(), marg.sorted_values.end());
      const auto rank = midranks(col);
      for (int i = 0; i < n; ++i) {
        scores(i, j) = normal_quantile(rank[static_cast<std::size_t>(i)] / (n + 1));
      }
    } else {
      const auto vocab_size =
          d.schema.columns[static_cast<std::size_t>(j)].vocabulary.size();
      std::vector<double> freq(vocab_size, 0.0);
      for (int i = 0; i < n; ++i) freq[static_cast<std::size_t>(col(i))] += 1.0 / n;
      marg.cumulative.resize(vocab_size);
      std::vector<double> mid(vocab_size);
      double cum = 0.0;
      for (std::size_t c = 0; c < vocab_size; ++c) {
        mid[c] = cum + 0.5 * freq[c];
        cum += freq[c];
        marg.cumulative[c] = cum;
      }
      marg.cumulative.back() = 1.0;
      for (int i = 0; i < n; ++i) {
        const double u = std::clamp(mid[static_cast<std::size_t>(col(i))], 1e-12, 1.0 - 1e-12);
        scores(i, j) = normal_quantile(u);
      }
    }
    if (marg.constant) degenerate[static_cast<std::size_t>(j)] = true;
  }
  if (m == 1 && degenerate[0]) {
    throw std::invalid_argument("degenerate copula: the only column is constant");
  }

  // Pearson correlation of the normal scores; degenerate columns take the
  // identity row so they stay independent of the latent draw.
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, m);
  for (int j = 0; j < m; ++j) {
    Eigen::VectorXd c = scores.col(j).array() - scores.col(j).mean();
    const double norm = c.norm();
    if (norm == 0.0) {
      degenerate[static_cast<std::size_t>(j)] = true;
      continue;
    }
    w.col(j) = c / norm;
  }
  Eigen::MatrixXd corr = w.transpose() * w;
  for (int j = 0; j < m; ++j) {
    if (degenerate[static_cast<std::size_t>(j)]) {
      corr.row(j).setZero();
      corr.col(j).setZero();
    }
    corr(j, j) = 1.0;
  }
  corr = 0.5 * (corr + corr.transpose()).eval();
  corr = corr.cwiseMax(-1.0).cwiseMin(1.0);
  for (int j = 0; j < m; ++j) corr(j, j) = 1.0;

  // Minimal convex shift toward identity, escalating the eigenvalue floor
  // until the Cholesky factorization succeeds.
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(corr);
  const double lambda_min = eig.eigenvalues().minCoeff();
  for (double target : {1e-8, 1e-6, 1e-4}) {
    Eigen::MatrixXd shifted = corr;
    if (lambda_min < target) {
      const double t = (target - lambda_min) / (1.0 - lambda_min);
      shifted = (1.0 - t) * corr + t * Eigen::MatrixXd::Identity(m, m);
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(shifted);
    if (llt.info() == Eigen::Success) {
      model.correlation = std::move(shifted);
      model.cholesky = llt.matrixL();
      model.validate();
      return model;
    }
  }
  throw std::runtime_error("correlation matrix could not be made positive definite");
}

SyntheticPool sample_copula(const CopulaModel& m, int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample count must be >= 1");
  const int cols = m.schema.num_columns();
  auto rng = make_rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SyntheticPool out;
  out.schema = m.schema;
  out.features.resize(n, cols);
  Eigen::VectorXd g(cols);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < cols; ++j) g(j) = gauss(rng);
    const Eigen::VectorXd z = m.cholesky * g;
    for (int j = 0; j < cols; ++j) {
      const double u = normal_cdf(z(j));
      out.features(i, j) = invert_marginal(m.marginals[static_cast<std::size_t>(j)], u);
    }
  }
  out.validate();
  return out;
}

KnnQueryContext make_knn_context(const Dataset& pool) {
  if (pool.num_rows() == 0) throw std::invalid_argument("empty pool");
  KnnQueryContext ctx;
  ctx.pool = &pool;
  ctx.continuous_cols = pool.schema.continuous_indices();
  ctx.discrete_cols = pool.schema.discrete_indices();
  ctx.scale = Eigen::VectorXd::Ones(pool.schema.num_columns());
  for (int j : ctx.continuous_cols) {
    const auto col = pool.features.col(j);
    const double sd = std::sqrt((col.array() - col.mean()).square().mean());
    if (sd > 0.0) ctx.scale(j) = sd;
  }
  return ctx;
}

double mixed_distance(const KnnQueryContext& ctx, const Eigen::RowVectorXd& x,
                      int pool_row) {
  const auto& f = ctx.pool->features;
  double d = 0.0;
  for (int j : ctx.continuous_cols) {
    const double diff = (x(j) - f(pool_row, j)) / ctx.scale(j);
    d += diff * diff;
  }
  for (int j : ctx.discrete_cols) {
    if (x(j) != f(pool_row, j)) d += 1.0;
  }
  return d;
}

std::vector<int> knn_candidate_indices(const KnnQueryContext& ctx,
                                       const Eigen::RowVectorXd& x,
                                       double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("knn fraction must lie in (0,1]");
  }
  const int n_pool = ctx.pool->num_rows();
  if (x.size() != ctx.pool->schema.num_columns()) {
    throw std::invalid_argument("query row width does not match pool schema");
  }
  const int k = std::max(1, static_cast<int>(std::lround(fraction * n_pool)));
  std::vector<std::pair<double, int>> order(static_cast<std::size_t>(n_pool));
  for (int r = 0; r < n_pool; ++r) {
    order[static_cast<std::size_t>(r)] = {mixed_distance(ctx, x, r), r};
  }
  std::partial_sort(order.begin(), order.begin() + k, order.end());
  std::vector<int> out(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) out[static_cast<std::size_t>(i)] = order[static_cast<std::size_t>(i)].second;
  return out;
}

int select_source_index(const KnnQueryContext& ctx, const Eigen::RowVectorXd& x,
                        double fraction, std::uint64_t seed) {
  const std::vector<int> cand = knn_candidate_indices(ctx, x, fraction);
  auto rng = make_rng(seed);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(cand.size()) - 1);
  return cand[static_cast<std::size_t>(pick(rng))];
}

Eigen::RowVectorXd select_perturbation_source(const KnnQueryContext& ctx,
                                              const Eigen::RowVectorXd& x,
                                              double fraction, std::uint64_t seed) {
  return ctx.pool->features.row(select_source_index(ctx, x, fraction, seed));
}

Eigen::RowVectorXd select_perturbation_source(const Eigen::RowVectorXd& x,
                                              const Dataset& pool, double fraction,
                                              std::uint64_t seed) {
  const KnnQueryContext ctx = make_knn_context(pool);
  return select_perturbation_source(ctx, x, fraction, seed);
}

}  // namespace crowdteacher
