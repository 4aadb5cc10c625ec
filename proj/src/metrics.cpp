#include "crowdteacher/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace crowdteacher {

namespace {

long count_positives(std::span<const int> labels) {
  long p = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("labels must be binary 0/1");
    p += y;
  }
  return p;
}

void check_binary_inputs(std::span<const double> scores, std::span<const int> labels,
                         long positives) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("scores and labels must have equal length");
  }
  if (scores.empty()) throw std::invalid_argument("empty inputs");
  if (positives == 0 || positives == static_cast<long>(labels.size())) {
    throw std::invalid_argument("labels contain a single class");
  }
}

}  // namespace

double auprc(std::span<const double> scores, std::span<const int> labels) {
  const long total_pos = count_positives(labels);
  check_binary_inputs(scores, labels, total_pos);
  const std::size_t n = scores.size();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  double ap = 0.0;
  double prev_recall = 0.0;
  long tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < n) {
    // All items tied at this score cross the threshold together.
    std::size_t j = i;
    long group_tp = 0, group_fp = 0;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] == 1) {
        ++group_tp;
      } else {
        ++group_fp;
      }
      ++j;
    }
    tp += group_tp;
    fp += group_fp;
    const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  const long total_pos = count_positives(labels);
  check_binary_inputs(scores, labels, total_pos);
  const std::size_t n = scores.size();
  const long total_neg = static_cast<long>(n) - total_pos;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  // Midranks: ties share the average of their 1-based rank positions.
  double positive_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    long group_pos = 0;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      group_pos += labels[order[j]];
      ++j;
    }
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of i+1 .. j
    positive_rank_sum += midrank * static_cast<double>(group_pos);
    i = j;
  }
  const double u = positive_rank_sum -
                   0.5 * static_cast<double>(total_pos) * static_cast<double>(total_pos + 1);
  return u / (static_cast<double>(total_pos) * static_cast<double>(total_neg));
}

EvalResult evaluate_scores(std::span<const double> scores, std::span<const int> labels) {
  EvalResult r;
  r.auprc = auprc(scores, labels);
  r.auroc = auroc(scores, labels);
  r.n_test = static_cast<int>(labels.size());
  r.positive_prevalence =
      static_cast<double>(count_positives(labels)) / static_cast<double>(labels.size());
  return r;
}

}  // namespace crowdteacher
