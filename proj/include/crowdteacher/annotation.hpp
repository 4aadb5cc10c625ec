#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "crowdteacher/tabular.hpp"

namespace crowdteacher {

// Percent chance of labeling a positive sample correctly.
struct AnnotatorProfile {
  double reliability = 90.0;  // in [0, 100]
};

// N x R matrix of class labels; kMissing marks unassigned entries. Every row
// carries at least one annotation.
struct AnswerMatrix {
  static constexpr int kMissing = -1;

  Eigen::MatrixXi entries;
  int num_classes = 2;

  int num_samples() const { return static_cast<int>(entries.rows()); }
  int num_annotators() const { return static_cast<int>(entries.cols()); }
  void validate() const;
};

struct SimConfig {
  int num_annotators = 5;        // R
  double tau = 0.5;              // probability of exactly one label, in (0,1]
  double beta_a = 8.0;           // reliability shape parameters; the draw is
  double beta_b = 2.0;           // scaled onto [50, 100] percent
  double negative_flip_ratio = 0.01;
  std::uint64_t seed = 0;
};

// Probability that a sample receives 1..5 labels:
// [tau, 0.55(1-tau), 0.27(1-tau), 0.13(1-tau), 0.05(1-tau)].
std::array<double, 5> label_count_distribution(double tau);

// Expected labels per sample under label_count_distribution: 2.68 - 1.68*tau.
double expected_labels_per_sample(double tau);

double average_labels_per_sample(const AnswerMatrix& a);

std::vector<AnnotatorProfile> draw_annotator_profiles(const SimConfig& cfg);

struct SimResult {
  AnswerMatrix answers;
  std::vector<AnnotatorProfile> profiles;
};

// Simulates the answer matrix over d.noisy_labels (binary tasks only). Each
// sample draws its label count, is assigned that many distinct annotators
// uniformly, and each annotator flips an exact share of its assigned
// positives to negative plus negative_flip_ratio times that share of its
// negatives to positive.
SimResult simulate_annotations(const Dataset& d, const SimConfig& cfg);
SimResult simulate_annotations(const Dataset& d,
                               const std::vector<AnnotatorProfile>& profiles,
                               const SimConfig& cfg);

void save_answers_csv(const AnswerMatrix& a, const std::string& path);
AnswerMatrix load_answers_csv(const std::string& path, int num_classes);

}  // namespace crowdteacher
