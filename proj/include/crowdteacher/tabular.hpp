#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace crowdteacher {

enum class ColumnKind { Continuous, Discrete };

struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::Continuous;
  // Discrete only: ordered category vocabulary. May be left empty before
  // loading, in which case load_csv infers it in order of first appearance.
  std::vector<std::string> vocabulary;
};

// Ordered mixed-type column description. The continuous and discrete index
// sets partition [0, M).
struct FeatureSchema {
  std::vector<Column> columns;

  int num_columns() const { return static_cast<int>(columns.size()); }
  std::vector<int> continuous_indices() const;
  std::vector<int> discrete_indices() const;
  bool same_layout(const FeatureSchema& other) const;
  void validate() const;
};

// Mixed-type tabular dataset. Continuous cells hold the raw value; discrete
// cells hold the category index into the column vocabulary, so distance and
// copula code can treat the matrix uniformly.
struct Dataset {
  FeatureSchema schema;
  Eigen::MatrixXd features;  // N x M
  std::optional<std::vector<int>> clean_labels;
  std::optional<std::vector<int>> noisy_labels;
  int num_classes = 2;

  int num_rows() const { return static_cast<int>(features.rows()); }
  int num_features() const { return static_cast<int>(features.cols()); }
  void validate() const;
};

// Per-column affine transform for continuous features, fitted on a training
// split. Discrete columns pass through untouched. Zero-variance columns get
// divisor 1, so they standardize to all-zeros.
struct Standardizer {
  FeatureSchema schema;
  Eigen::VectorXd mean;    // M; zero on discrete columns
  Eigen::VectorXd stddev;  // M; one on discrete and zero-variance columns
};

// Shortest decimal string that parses back to exactly v (at most 17
// significant digits).
std::string format_double(double v);

// CSV ingestion. The header must match the schema names in order; two
// optional trailing columns named "clean_label" / "noisy_label" carry the
// label vectors. Discrete cells are matched against the vocabulary, or the
// vocabulary is inferred in first-appearance order when the schema leaves it
// empty.
Dataset load_csv(const std::string& path, FeatureSchema schema);
void save_csv(const Dataset& d, const std::string& path);

Dataset subset_rows(const Dataset& d, const std::vector<int>& indices);

// Uniform shuffle split; both splits keep the original row order.
std::pair<Dataset, Dataset> split_train_test(const Dataset& d,
                                             double test_fraction,
                                             std::uint64_t seed);

std::pair<Standardizer, Dataset> standardize_fit_transform(const Dataset& train);
Dataset standardize_apply(const Standardizer& s, const Dataset& d);
Dataset standardize_invert(const Standardizer& s, const Dataset& d);

}  // namespace crowdteacher
