#include "crowdteacher/annotation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "crowdteacher/rng.hpp"
#include "crowdteacher/stats.hpp"

namespace crowdteacher {

namespace {

constexpr double kReliabilityLow = 50.0;
constexpr double kReliabilityHigh = 100.0;

// First `count` elements of a uniform random permutation of 0..n-1.
std::vector<int> sample_without_replacement(int n, int count, std::mt19937_64& rng) {
  std::vector<int> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(count);
  return pool;
}

}  // namespace

void AnswerMatrix::validate() const {
  for (int i = 0; i < num_samples(); ++i) {
    bool annotated = false;
    for (int r = 0; r < num_annotators(); ++r) {
      const int v = entries(i, r);
      if (v == kMissing) continue;
      if (v < 0 || v >= num_classes) {
        throw std::invalid_argument("answer matrix entry out of [0,K) at row " +
                                    std::to_string(i));
      }
      annotated = true;
    }
    if (!annotated) {
      throw std::invalid_argument("answer matrix row " + std::to_string(i) +
                                  " has no annotations");
    }
  }
}

std::array<double, 5> label_count_distribution(double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) {
    throw std::invalid_argument("tau must lie in (0,1]");
  }
  const double rest = 1.0 - tau;
  return {tau, 0.55 * rest, 0.27 * rest, 0.13 * rest, 0.05 * rest};
}

double expected_labels_per_sample(double tau) { return 2.68 - 1.68 * tau; }

double average_labels_per_sample(const AnswerMatrix& a) {
  const long total = (a.entries.array() != AnswerMatrix::kMissing).count();
  return static_cast<double>(total) / a.num_samples();
}

std::vector<AnnotatorProfile> draw_annotator_profiles(const SimConfig& cfg) {
  if (cfg.num_annotators < 1) throw std::invalid_argument("R must be >= 1");
  if (!(cfg.beta_a > 0.0 && cfg.beta_b > 0.0)) {
    throw std::invalid_argument("beta shape parameters must be positive");
  }
  auto rng = make_rng(derive_seed(cfg.seed, 0xA1));
  std::vector<AnnotatorProfile> profiles(cfg.num_annotators);
  for (auto& p : profiles) {
    const double u = sample_beta(rng, cfg.beta_a, cfg.beta_b);
    p.reliability = kReliabilityLow + (kReliabilityHigh - kReliabilityLow) * u;
  }
  return profiles;
}

SimResult simulate_annotations(const Dataset& d, const SimConfig& cfg) {
  return simulate_annotations(d, draw_annotator_profiles(cfg), cfg);
}

SimResult simulate_annotations(const Dataset& d,
                               const std::vector<AnnotatorProfile>& profiles,
                               const SimConfig& cfg) {
  if (!d.noisy_labels) throw std::invalid_argument("simulate: dataset has no noisy labels");
  if (d.num_classes != 2) throw std::invalid_argument("simulate: flip model is binary-only");
  const int r_count = static_cast<int>(profiles.size());
  if (r_count < 1) throw std::invalid_argument("simulate: no annotators");
  for (const auto& p : profiles) {
    if (p.reliability < 0.0 || p.reliability > 100.0) {
      throw std::invalid_argument("reliability must lie in [0,100]");
    }
  }
  const auto dist = label_count_distribution(cfg.tau);
  const auto& truth = *d.noisy_labels;
  const int n = d.num_rows();

  AnswerMatrix answers;
  answers.num_classes = 2;
  answers.entries = Eigen::MatrixXi::Constant(n, r_count, AnswerMatrix::kMissing);

  // Assignment: per-sample label count, then that many distinct annotators.
  auto assign_rng = make_rng(derive_seed(cfg.seed, 0xA2));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  long clamped = 0;
  for (int i = 0; i < n; ++i) {
    const double u = unif(assign_rng);
    int count = 5;
    double cum = 0.0;
    for (int k = 0; k < 5; ++k) {
      cum += dist[k];
      if (u < cum) {
        count = k + 1;
        break;
      }
    }
    if (count > r_count) {
      count = r_count;
      ++clamped;
    }
    for (int r : sample_without_replacement(r_count, count, assign_rng)) {
      answers.entries(i, r) = truth[i];
    }
  }
  if (clamped > 0) {
    std::cerr << "simulate_annotations: label count clamped to R for " << clamped
              << " samples\n";
  }

  // Per annotator: flip an exact share of assigned positives, and
  // negative_flip_ratio times that share of assigned negatives.
  for (int r = 0; r < r_count; ++r) {
    auto flip_rng = make_rng(derive_seed(cfg.seed, 0xB0 + static_cast<std::uint64_t>(r)));
    std::vector<int> positives, negatives;
    for (int i = 0; i < n; ++i) {
      if (answers.entries(i, r) == AnswerMatrix::kMissing) continue;
      (truth[i] == 1 ? positives : negatives).push_back(i);
    }
    const double error_rate = (100.0 - profiles[r].reliability) / 100.0;
    const int n_pos_flips = static_cast<int>(
        std::llround(error_rate * static_cast<double>(positives.size())));
    const int n_neg_flips = static_cast<int>(std::llround(
        cfg.negative_flip_ratio * error_rate * static_cast<double>(negatives.size())));
    for (int k : sample_without_replacement(static_cast<int>(positives.size()),
                                            n_pos_flips, flip_rng)) {
      answers.entries(positives[k], r) = 0;
    }
    for (int k : sample_without_replacement(static_cast<int>(negatives.size()),
                                            n_neg_flips, flip_rng)) {
      answers.entries(negatives[k], r) = 1;
    }
  }

  answers.validate();
  return {std::move(answers), profiles};
}

void save_answers_csv(const AnswerMatrix& a, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  for (int r = 0; r < a.num_annotators(); ++r) {
    if (r) out << ',';
    out << "annotator_" << r;
  }
  out << '\n';
  for (int i = 0; i < a.num_samples(); ++i) {
    for (int r = 0; r < a.num_annotators(); ++r) {
      if (r) out << ',';
      out << a.entries(i, r);
    }
    out << '\n';
  }
}

AnswerMatrix load_answers_csv(const std::string& path, int num_classes) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty file: " + path);
  std::vector<std::vector<int>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<int> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stoi(cell));
    if (!rows.empty() && rows.front().size() != row.size()) {
      throw std::runtime_error("ragged answer matrix in " + path);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("no samples in " + path);
  AnswerMatrix a;
  a.num_classes = num_classes;
  a.entries.resize(static_cast<Eigen::Index>(rows.size()),
                   static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t r = 0; r < rows.front().size(); ++r) {
      a.entries(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r)) = rows[i][r];
    }
  }
  a.validate();
  return a;
}

}  // namespace crowdteacher
