#include "crowdteacher/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "crowdteacher/rng.hpp"

namespace crowdteacher {

Eigen::RowVectorXd perturb_sample(const Eigen::RowVectorXd& x,
                                  const Eigen::RowVectorXd& s, double c,
                                  const FeatureSchema& schema,
                                  const PerturbConfig& cfg, std::uint64_t seed) {
  if (x.size() != schema.num_columns() || s.size() != x.size()) {
    throw std::invalid_argument("perturb: row width does not match schema");
  }
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) {
    throw std::invalid_argument("alpha must lie in [0,1]");
  }
  const double weight =
      cfg.alpha * (cfg.mode == PerturbMode::Uniform ? 1.0 : c);
  if (cfg.mode == PerturbMode::CertaintyWeighted && !(c >= 0.0 && c <= 1.0)) {
    throw std::invalid_argument("certainty must lie in [0,1]");
  }

  Eigen::RowVectorXd out = x;
  for (int j : schema.continuous_indices()) {
    out(j) = (1.0 - weight) * x(j) + weight * s(j);
  }

  auto disc = schema.discrete_indices();
  const int n_disc = static_cast<int>(disc.size());
  const int n_swap = static_cast<int>(std::lround(weight * n_disc));
  if (n_swap > 0) {
    auto rng = make_rng(seed);
    for (int t = 0; t < n_swap; ++t) {
      std::uniform_int_distribution<int> pick(t, n_disc - 1);
      std::swap(disc[static_cast<std::size_t>(t)],
                disc[static_cast<std::size_t>(pick(rng))]);
      out(disc[static_cast<std::size_t>(t)]) = s(disc[static_cast<std::size_t>(t)]);
    }
  }
  return out;
}

PerturbPlan make_perturb_plan(const Dataset& d, const SyntheticPool& pool,
                              const Eigen::VectorXd& cert,
                              const PerturbConfig& cfg) {
  if (cert.size() != d.num_rows()) {
    throw std::invalid_argument("certainty length does not match dataset");
  }
  if (!d.schema.same_layout(pool.schema)) {
    throw std::invalid_argument("pool schema does not match dataset");
  }
  PerturbPlan plan{d, pool, cert, cfg, {}};
  const KnnQueryContext ctx = make_knn_context(plan.pool);
  plan.candidates.reserve(static_cast<std::size_t>(d.num_rows()));
  for (int i = 0; i < d.num_rows(); ++i) {
    plan.candidates.push_back(
        knn_candidate_indices(ctx, d.features.row(i), cfg.knn_fraction));
  }
  return plan;
}

Dataset draw_perturbed(const PerturbPlan& plan, std::uint64_t seed) {
  Dataset out = plan.base;
  PerturbConfig cfg = plan.cfg;
  cfg.seed = seed;
  for (int i = 0; i < out.num_rows(); ++i) {
    const std::uint64_t seed_i = derive_seed(seed, static_cast<std::uint64_t>(i));
    const auto& cand = plan.candidates[static_cast<std::size_t>(i)];
    auto rng = make_rng(seed_i);
    std::uniform_int_distribution<int> pick(0, static_cast<int>(cand.size()) - 1);
    const Eigen::RowVectorXd x = plan.base.features.row(i);
    const Eigen::RowVectorXd s =
        plan.pool.features.row(cand[static_cast<std::size_t>(pick(rng))]);
    out.features.row(i) =
        perturb_sample(x, s, plan.certainty(i), out.schema, cfg, seed_i);
  }
  return out;
}

Dataset perturb_dataset(const Dataset& d, const SyntheticPool& pool,
                        const Eigen::VectorXd& cert, const PerturbConfig& cfg) {
  return draw_perturbed(make_perturb_plan(d, pool, cert, cfg), cfg.seed);
}

}  // namespace crowdteacher
