#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "crowdteacher/copula.hpp"
#include "crowdteacher/tabular.hpp"

namespace crowdteacher {

enum class PerturbMode {
  CertaintyWeighted,  // perturbation magnitude scales with alpha * c_i
  Uniform,            // c_i replaced by 1, magnitude scales with alpha alone
};

struct PerturbConfig {
  double alpha = 0.11;        // perturbation fraction, in [0,1]
  double knn_fraction = 0.1;  // share of the pool forming the candidate set, in (0,1]
  PerturbMode mode = PerturbMode::CertaintyWeighted;
  std::uint64_t seed = 0;
};

// Blends sample x toward source s: continuous columns move by the convex
// weight alpha*c, and round(alpha*c*|F_d|) uniformly chosen discrete columns
// take s's value outright. Deterministic given seed.
Eigen::RowVectorXd perturb_sample(const Eigen::RowVectorXd& x,
                                  const Eigen::RowVectorXd& s, double c,
                                  const FeatureSchema& schema,
                                  const PerturbConfig& cfg, std::uint64_t seed);

// Per row i: pick a source from the pool's nearest-neighbour candidates and
// perturb with certainty cert[i], both under seed derive_seed(cfg.seed, i).
// Labels and schema carry over unchanged.
Dataset perturb_dataset(const Dataset& d, const SyntheticPool& pool,
                        const Eigen::VectorXd& cert, const PerturbConfig& cfg);

// Frozen per-row candidate sets for redrawing the perturbation of one dataset
// against one pool many times (epoch-wise redraws) without rescanning the
// pool. draw_perturbed(plan, s) equals perturb_dataset with cfg.seed = s.
struct PerturbPlan {
  Dataset base;
  SyntheticPool pool;
  Eigen::VectorXd certainty;
  PerturbConfig cfg;                         // seed field unused by draws
  std::vector<std::vector<int>> candidates;  // per base row, pool row indices
};

PerturbPlan make_perturb_plan(const Dataset& d, const SyntheticPool& pool,
                              const Eigen::VectorXd& cert,
                              const PerturbConfig& cfg);
Dataset draw_perturbed(const PerturbPlan& plan, std::uint64_t seed);

}  // namespace crowdteacher
