#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "crowdteacher/annotation.hpp"

namespace crowdteacher {

// Posterior class probabilities plus the per-annotator error model.
struct InferenceResult {
  Eigen::MatrixXd P;                       // N x K, rows sum to 1
  Eigen::VectorXd certainty;               // c_i = max_k P_ik, in [1/K, 1]
  std::vector<Eigen::MatrixXd> confusion;  // one K x K row-stochastic matrix per annotator
  Eigen::VectorXd priors;                  // length K, sums to 1
  std::vector<int> hard_labels;            // argmax_k P_ik, ties toward lower k
  int iterations = 0;
  bool converged = false;
  std::vector<double> log_likelihood;      // observed-data value, one entry per EM iteration

  void validate() const;
};

// P_ik = fraction of sample i's annotations equal to class k. Confusion
// matrices are identity, priors are the column means of P.
InferenceResult majority_vote(const AnswerMatrix& a, int num_classes);

// EM over annotator confusion matrices, initialized from majority_vote.
// M-step smooths confusion counts additively by `smoothing`; the E-step runs
// in log space. Stops once max_i ||dP_i||_inf < tol or after max_iters.
// Throws if the log likelihood ever decreases beyond rounding tolerance.
InferenceResult dawid_skene(const AnswerMatrix& a, int num_classes,
                            int max_iters = 100, double tol = 1e-6,
                            double smoothing = 1e-2);

// c_i = max_k P_ik.
Eigen::VectorXd certainty(const InferenceResult& r);

// N rows of K posterior columns followed by the certainty column.
void save_inference_csv(const InferenceResult& r, const std::string& path);

}  // namespace crowdteacher
