#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include <doctest.h>

#include "crowdteacher/annotation.hpp"
#include "crowdteacher/tabular.hpp"

using namespace crowdteacher;

namespace {

Dataset labeled_dataset(int n, int positives) {
  Dataset d;
  d.schema.columns.push_back({"x", ColumnKind::Continuous, {}});
  d.features.resize(n, 1);
  d.noisy_labels = std::vector<int>(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    d.features(i, 0) = i;
    if (i < positives) (*d.noisy_labels)[i] = 1;
  }
  return d;
}

}  // namespace

TEST_SUITE("annotation") {

TEST_CASE("label count distribution is a probability vector") {
  for (double tau : {0.1, 0.2024, 0.5, 0.8, 1.0}) {
    const auto p = label_count_distribution(tau);
    double sum = 0.0;
    for (double v : p) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p[0] == tau);
  }
  CHECK_THROWS(label_count_distribution(0.0));
  CHECK_THROWS(label_count_distribution(1.5));
}

TEST_CASE("expected labels per sample matches the distribution mean") {
  for (double tau : {0.1, 0.2024, 0.45, 0.9}) {
    const auto p = label_count_distribution(tau);
    double mean = 0.0;
    for (int k = 0; k < 5; ++k) mean += (k + 1) * p[static_cast<std::size_t>(k)];
    CHECK(expected_labels_per_sample(tau) == doctest::Approx(mean).epsilon(1e-12));
  }
  CHECK(expected_labels_per_sample(0.2024) == doctest::Approx(2.339968).epsilon(1e-12));
}

TEST_CASE("realized label density tracks the expectation") {
  const Dataset d = labeled_dataset(5000, 1500);
  for (double tau : {0.2, 0.6}) {
    SimConfig cfg;
    cfg.tau = tau;
    cfg.seed = 21;
    const SimResult res = simulate_annotations(d, cfg);
    // Per-sample count variance is bounded by E[k^2] <= 25.
    const double sigma = std::sqrt(25.0 / d.num_rows());
    CHECK(std::abs(average_labels_per_sample(res.answers) -
                   expected_labels_per_sample(tau)) < 4.0 * sigma);
  }
}

TEST_CASE("profiles stay in [50,100] with mean near 90") {
  SimConfig cfg;
  cfg.num_annotators = 4000;
  cfg.seed = 5;
  const auto profiles = draw_annotator_profiles(cfg);
  double sum = 0.0;
  for (const auto& p : profiles) {
    CHECK(p.reliability >= 50.0);
    CHECK(p.reliability <= 100.0);
    sum += p.reliability;
  }
  // Beta(8,2) mean 0.8 scaled to [50,100] gives 90; sd of the mean ~ 0.1.
  CHECK(sum / cfg.num_annotators == doctest::Approx(90.0).epsilon(0.01));
}

TEST_CASE("answers copy the noisy labels before flips") {
  const Dataset d = labeled_dataset(400, 100);
  std::vector<AnnotatorProfile> perfect(3, AnnotatorProfile{100.0});
  SimConfig cfg;
  cfg.num_annotators = 3;
  cfg.tau = 0.5;
  cfg.seed = 9;
  const SimResult res = simulate_annotations(d, perfect, cfg);
  for (int i = 0; i < d.num_rows(); ++i) {
    for (int r = 0; r < 3; ++r) {
      const int v = res.answers.entries(i, r);
      if (v != AnswerMatrix::kMissing) CHECK(v == (*d.noisy_labels)[i]);
    }
  }
}

TEST_CASE("flip counts are exact per annotator") {
  const Dataset d = labeled_dataset(1000, 300);
  // One annotator who sees every sample: tau=1 gives exactly one label per
  // sample, and R=1 routes them all to annotator 0.
  std::vector<AnnotatorProfile> one{AnnotatorProfile{80.0}};
  SimConfig cfg;
  cfg.num_annotators = 1;
  cfg.tau = 1.0;
  cfg.negative_flip_ratio = 0.01;
  cfg.seed = 33;
  const SimResult res = simulate_annotations(d, one, cfg);
  int pos_flips = 0, neg_flips = 0;
  for (int i = 0; i < d.num_rows(); ++i) {
    const int v = res.answers.entries(i, 0);
    REQUIRE(v != AnswerMatrix::kMissing);
    if ((*d.noisy_labels)[i] == 1 && v == 0) ++pos_flips;
    if ((*d.noisy_labels)[i] == 0 && v == 1) ++neg_flips;
  }
  // error rate 0.2: round(0.2*300) positives, round(0.01*0.2*700) negatives.
  CHECK(pos_flips == 60);
  CHECK(neg_flips == 1);
}

TEST_CASE("zero reliability flips every positive") {
  const Dataset d = labeled_dataset(50, 20);
  std::vector<AnnotatorProfile> hostile{AnnotatorProfile{0.0}};
  SimConfig cfg;
  cfg.num_annotators = 1;
  cfg.tau = 1.0;
  cfg.negative_flip_ratio = 0.0;
  cfg.seed = 3;
  const SimResult res = simulate_annotations(d, hostile, cfg);
  // error rate 1.0 flips all positives; negatives are untouched at ratio 0.
  for (int i = 0; i < d.num_rows(); ++i) {
    CHECK(res.answers.entries(i, 0) == 0);
  }
}

TEST_CASE("every sample receives at least one annotation") {
  const Dataset d = labeled_dataset(800, 240);
  SimConfig cfg;
  cfg.tau = 0.1;  // heavy multi-label regime
  cfg.seed = 12;
  const SimResult res = simulate_annotations(d, cfg);
  CHECK_NOTHROW(res.answers.validate());
  for (int i = 0; i < res.answers.num_samples(); ++i) {
    bool any = false;
    for (int r = 0; r < res.answers.num_annotators(); ++r) {
      const int v = res.answers.entries(i, r);
      CHECK(v >= -1);
      CHECK(v < 2);
      any = any || v != AnswerMatrix::kMissing;
    }
    CHECK(any);
  }
}

TEST_CASE("simulation is deterministic in the seed") {
  const Dataset d = labeled_dataset(300, 90);
  SimConfig cfg;
  cfg.seed = 77;
  const SimResult a = simulate_annotations(d, cfg);
  const SimResult b = simulate_annotations(d, cfg);
  CHECK(a.answers.entries == b.answers.entries);
  cfg.seed = 78;
  const SimResult c = simulate_annotations(d, cfg);
  CHECK(a.answers.entries != c.answers.entries);
}

TEST_CASE("simulation rejects unusable datasets") {
  Dataset d = labeled_dataset(10, 5);
  SimConfig cfg;
  d.num_classes = 3;
  (*d.noisy_labels)[0] = 2;
  CHECK_THROWS(simulate_annotations(d, cfg));
  Dataset no_labels = labeled_dataset(10, 5);
  no_labels.noisy_labels.reset();
  CHECK_THROWS(simulate_annotations(no_labels, cfg));
  std::vector<AnnotatorProfile> bad{AnnotatorProfile{120.0}};
  CHECK_THROWS(simulate_annotations(labeled_dataset(10, 5), bad, cfg));
}

TEST_CASE("answer csv round-trips") {
  const Dataset d = labeled_dataset(60, 20);
  SimConfig cfg;
  cfg.seed = 4;
  const SimResult res = simulate_annotations(d, cfg);
  const auto path =
      (std::filesystem::temp_directory_path() / "ct_answers_roundtrip.csv").string();
  save_answers_csv(res.answers, path);
  const AnswerMatrix back = load_answers_csv(path, 2);
  CHECK(back.entries == res.answers.entries);
  CHECK(back.num_classes == 2);
  std::filesystem::remove(path);
}

}
