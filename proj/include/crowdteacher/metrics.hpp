#pragma once

#include <span>

namespace crowdteacher {

struct EvalResult {
  double auprc = 0.0;
  double auroc = 0.0;
  int n_test = 0;
  double positive_prevalence = 0.0;
};

// Area under the precision-recall curve, average-precision formulation:
// descending-score sweep accumulating precision * recall increments. Tied
// scores enter a threshold together. Requires both classes present.
double auprc(std::span<const double> scores, std::span<const int> labels);

// Mann-Whitney AUROC: (concordant pairs + 0.5 * tied pairs) / (P * N),
// computed via midranks. Requires both classes present.
double auroc(std::span<const double> scores, std::span<const int> labels);

EvalResult evaluate_scores(std::span<const double> scores, std::span<const int> labels);

}  // namespace crowdteacher
