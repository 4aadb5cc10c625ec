#include "crowdteacher/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "crowdteacher/rng.hpp"

namespace crowdteacher {

namespace {

const std::string kCleanLabelColumn = "clean_label";
const std::string kNoisyLabelColumn = "noisy_label";

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

double parse_double_cell(const std::string& cell, int row, const std::string& col) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0') {
    throw std::runtime_error("unparseable cell at data row " + std::to_string(row) +
                             ", column '" + col + "': '" + cell + "'");
  }
  return v;
}

int parse_int_cell(const std::string& cell, int row, const std::string& col) {
  const double v = parse_double_cell(cell, row, col);
  const int i = static_cast<int>(std::llround(v));
  if (static_cast<double>(i) != v) {
    throw std::runtime_error("non-integer label at data row " + std::to_string(row) +
                             ", column '" + col + "': '" + cell + "'");
  }
  return i;
}

}  // namespace

std::vector<int> FeatureSchema::continuous_indices() const {
  std::vector<int> idx;
  for (int j = 0; j < num_columns(); ++j) {
    if (columns[j].kind == ColumnKind::Continuous) idx.push_back(j);
  }
  return idx;
}

std::vector<int> FeatureSchema::discrete_indices() const {
  std::vector<int> idx;
  for (int j = 0; j < num_columns(); ++j) {
    if (columns[j].kind == ColumnKind::Discrete) idx.push_back(j);
  }
  return idx;
}

bool FeatureSchema::same_layout(const FeatureSchema& other) const {
  if (columns.size() != other.columns.size()) return false;
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j].name != other.columns[j].name) return false;
    if (columns[j].kind != other.columns[j].kind) return false;
  }
  return true;
}

void FeatureSchema::validate() const {
  std::unordered_set<std::string> seen;
  for (const auto& c : columns) {
    if (c.name.empty()) throw std::invalid_argument("schema: empty column name");
    if (!seen.insert(c.name).second) {
      throw std::invalid_argument("schema: duplicate column name '" + c.name + "'");
    }
    if (c.name == kCleanLabelColumn || c.name == kNoisyLabelColumn) {
      throw std::invalid_argument("schema: column name '" + c.name + "' is reserved");
    }
  }
}

void Dataset::validate() const {
  schema.validate();
  if (features.cols() != schema.num_columns()) {
    throw std::invalid_argument("dataset: feature width does not match schema");
  }
  if (num_classes < 2) throw std::invalid_argument("dataset: num_classes must be >= 2");
  const int n = num_rows();
  for (int j : schema.discrete_indices()) {
    const auto vocab_size = static_cast<double>(schema.columns[j].vocabulary.size());
    for (int i = 0; i < n; ++i) {
      const double v = features(i, j);
      if (v != std::floor(v) || v < 0.0 || v >= vocab_size) {
        throw std::invalid_argument("dataset: discrete cell out of vocabulary at row " +
                                    std::to_string(i) + ", column '" +
                                    schema.columns[j].name + "'");
      }
    }
  }
  for (const auto* labels : {&clean_labels, &noisy_labels}) {
    if (!labels->has_value()) continue;
    if (static_cast<int>((*labels)->size()) != n) {
      throw std::invalid_argument("dataset: label vector length != N");
    }
    for (int y : **labels) {
      if (y < 0 || y >= num_classes) {
        throw std::invalid_argument("dataset: label out of [0,K)");
      }
    }
  }
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;
}

Dataset load_csv(const std::string& path, FeatureSchema schema) {
  schema.validate();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty file: " + path);
  const auto header = split_line(strip_cr(line));

  const int m = schema.num_columns();
  if (static_cast<int>(header.size()) < m) {
    throw std::runtime_error("header has " + std::to_string(header.size()) +
                             " columns, schema expects " + std::to_string(m));
  }
  for (int j = 0; j < m; ++j) {
    if (header[j] != schema.columns[j].name) {
      throw std::runtime_error("header column " + std::to_string(j) + " is '" +
                               header[j] + "', schema expects '" +
                               schema.columns[j].name + "'");
    }
  }
  bool has_clean = false, has_noisy = false;
  for (std::size_t j = m; j < header.size(); ++j) {
    if (header[j] == kCleanLabelColumn && !has_clean) {
      has_clean = true;
    } else if (header[j] == kNoisyLabelColumn && !has_noisy) {
      has_noisy = true;
    } else {
      throw std::runtime_error("unexpected trailing column '" + header[j] + "'");
    }
  }
  const int total_cols = m + (has_clean ? 1 : 0) + (has_noisy ? 1 : 0);

  // Vocabulary lookup; empty schema vocabulary switches a column to
  // inference mode.
  std::vector<std::unordered_map<std::string, int>> vocab_index(m);
  std::vector<bool> infer_vocab(m, false);
  for (int j = 0; j < m; ++j) {
    if (schema.columns[j].kind != ColumnKind::Discrete) continue;
    infer_vocab[j] = schema.columns[j].vocabulary.empty();
    for (std::size_t v = 0; v < schema.columns[j].vocabulary.size(); ++v) {
      vocab_index[j][schema.columns[j].vocabulary[v]] = static_cast<int>(v);
    }
  }

  std::vector<std::vector<double>> rows;
  std::vector<int> clean, noisy;
  int row_number = 0;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    ++row_number;
    const auto cells = split_line(line);
    if (static_cast<int>(cells.size()) != total_cols) {
      throw std::runtime_error("data row " + std::to_string(row_number) + " has " +
                               std::to_string(cells.size()) + " cells, expected " +
                               std::to_string(total_cols));
    }
    std::vector<double> row(m);
    for (int j = 0; j < m; ++j) {
      const auto& col = schema.columns[j];
      if (col.kind == ColumnKind::Continuous) {
        row[j] = parse_double_cell(cells[j], row_number, col.name);
      } else {
        auto it = vocab_index[j].find(cells[j]);
        if (it == vocab_index[j].end()) {
          if (!infer_vocab[j]) {
            throw std::runtime_error("value '" + cells[j] + "' at data row " +
                                     std::to_string(row_number) + " is outside the vocabulary of column '" +
                                     col.name + "'");
          }
          const int idx = static_cast<int>(schema.columns[j].vocabulary.size());
          schema.columns[j].vocabulary.push_back(cells[j]);
          it = vocab_index[j].emplace(cells[j], idx).first;
        }
        row[j] = static_cast<double>(it->second);
      }
    }
    int c = m;
    if (has_clean) clean.push_back(parse_int_cell(cells[c++], row_number, kCleanLabelColumn));
    if (has_noisy) noisy.push_back(parse_int_cell(cells[c++], row_number, kNoisyLabelColumn));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("no samples in " + path);

  Dataset d;
  d.schema = std::move(schema);
  d.features.resize(static_cast<Eigen::Index>(rows.size()), m);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < m; ++j) d.features(static_cast<Eigen::Index>(i), j) = rows[i][j];
  }
  if (has_clean) d.clean_labels = std::move(clean);
  if (has_noisy) d.noisy_labels = std::move(noisy);
  int max_label = 1;
  for (const auto* labels : {&d.clean_labels, &d.noisy_labels}) {
    if (!labels->has_value()) continue;
    for (int y : **labels) max_label = std::max(max_label, y);
  }
  d.num_classes = max_label + 1;
  d.validate();
  return d;
}

void save_csv(const Dataset& d, const std::string& path) {
  d.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  const int m = d.num_features();
  for (int j = 0; j < m; ++j) {
    if (j) out << ',';
    out << d.schema.columns[j].name;
  }
  if (d.clean_labels) out << ',' << kCleanLabelColumn;
  if (d.noisy_labels) out << ',' << kNoisyLabelColumn;
  out << '\n';
  for (int i = 0; i < d.num_rows(); ++i) {
    for (int j = 0; j < m; ++j) {
      if (j) out << ',';
      const auto& col = d.schema.columns[j];
      if (col.kind == ColumnKind::Continuous) {
        out << format_double(d.features(i, j));
      } else {
        out << col.vocabulary[static_cast<std::size_t>(d.features(i, j))];
      }
    }
    if (d.clean_labels) out << ',' << (*d.clean_labels)[i];
    if (d.noisy_labels) out << ',' << (*d.noisy_labels)[i];
    out << '\n';
  }
}

Dataset subset_rows(const Dataset& d, const std::vector<int>& indices) {
  Dataset out;
  out.schema = d.schema;
  out.num_classes = d.num_classes;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), d.num_features());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = d.features.row(indices[i]);
  }
  auto pick = [&](const std::optional<std::vector<int>>& src) {
    std::optional<std::vector<int>> dst;
    if (src) {
      dst.emplace();
      dst->reserve(indices.size());
      for (int i : indices) dst->push_back((*src)[i]);
    }
    return dst;
  };
  out.clean_labels = pick(d.clean_labels);
  out.noisy_labels = pick(d.noisy_labels);
  return out;
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& d, double test_fraction,
                                             std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw std::invalid_argument("test_fraction must lie in (0,1)");
  }
  const int n = d.num_rows();
  if (n < 2) throw std::invalid_argument("split needs at least 2 rows");
  const int n_test = static_cast<int>(std::llround(test_fraction * n));
  if (n_test < 1 || n_test >= n) {
    throw std::invalid_argument("test_fraction leaves an empty split");
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> test_idx(order.begin(), order.begin() + n_test);
  std::vector<int> train_idx(order.begin() + n_test, order.end());
  std::sort(test_idx.begin(), test_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  return {subset_rows(d, train_idx), subset_rows(d, test_idx)};
}

std::pair<Standardizer, Dataset> standardize_fit_transform(const Dataset& train) {
  Standardizer s;
  s.schema = train.schema;
  const int m = train.num_features();
  const int n = train.num_rows();
  s.mean = Eigen::VectorXd::Zero(m);
  s.stddev = Eigen::VectorXd::Ones(m);
  for (int j : train.schema.continuous_indices()) {
    const double mean = train.features.col(j).mean();
    const double var = (train.features.col(j).array() - mean).square().sum() / n;
    const double sd = std::sqrt(var);
    s.mean(j) = mean;
    s.stddev(j) = sd > 0.0 ? sd : 1.0;
  }
  return {s, standardize_apply(s, train)};
}

Dataset standardize_apply(const Standardizer& s, const Dataset& d) {
  if (!s.schema.same_layout(d.schema)) {
    throw std::invalid_argument("standardizer schema mismatch");
  }
  Dataset out = d;
  for (int j : d.schema.continuous_indices()) {
    out.features.col(j) = (d.features.col(j).array() - s.mean(j)) / s.stddev(j);
  }
  return out;
}

Dataset standardize_invert(const Standardizer& s, const Dataset& d) {
  if (!s.schema.same_layout(d.schema)) {
    throw std::invalid_argument("standardizer schema mismatch");
  }
  Dataset out = d;
  for (int j : d.schema.continuous_indices()) {
    out.features.col(j) = d.features.col(j).array() * s.stddev(j) + s.mean(j);
  }
  return out;
}

}  // namespace crowdteacher
