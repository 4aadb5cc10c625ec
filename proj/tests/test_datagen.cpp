#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <doctest.h>
#include <json.hpp>
#include <Eigen/Core>

#include "crowdteacher/datagen.hpp"
#include "crowdteacher/tabular.hpp"

using namespace crowdteacher;

namespace {

constexpr FeatureFamily kOrder[] = {
    FeatureFamily::Normal,    FeatureFamily::Beta,      FeatureFamily::Wald,
    FeatureFamily::Laplace,   FeatureFamily::Binomial,  FeatureFamily::Multinomial,
    FeatureFamily::Geometric, FeatureFamily::Poisson,
};

double param(const ColumnAudit& a, const std::string& key) {
  for (const auto& [k, v] : a.params) {
    if (k == key) return v;
  }
  REQUIRE_MESSAGE(false, "missing audited parameter " << key);
  return 0.0;
}

// Raw numeric value behind a cell: continuous cells hold it directly,
// discrete cells hold an index into the numeric-string vocabulary.
double decode_cell(const Dataset& d, int row, int col) {
  const auto& c = d.schema.columns[static_cast<std::size_t>(col)];
  const double stored = d.features(row, col);
  if (c.kind == ColumnKind::Continuous) return stored;
  return std::stod(c.vocabulary[static_cast<std::size_t>(std::llround(stored))]);
}

// Reconstruct the labeling polynomial from the audit alone and re-derive the
// class split: standardized stored cells, linear plus interaction terms, the
// lowest balance-quantile of scores marked positive with index tie-breaks.
std::vector<int> labels_from_audit(const Dataset& d, const GenAudit& audit,
                                   double balance) {
  const int n = d.num_rows();
  const int m = d.num_features();
  Eigen::MatrixXd z = d.features;
  for (int j = 0; j < m; ++j) {
    const double mean = z.col(j).mean();
    double sd = std::sqrt((z.col(j).array() - mean).square().mean());
    if (sd == 0.0) sd = 1.0;
    z.col(j) = (z.col(j).array() - mean) / sd;
  }
  Eigen::VectorXd score = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < m; ++j) {
    score += audit.linear_coeffs[static_cast<std::size_t>(j)] * z.col(j);
  }
  for (const auto& t : audit.interactions) {
    score += t.coeff * z.col(t.a).cwiseProduct(z.col(t.b));
  }
  const int n_pos = static_cast<int>(std::llround(balance * n));
  std::vector<int> rank(static_cast<std::size_t>(n));
  std::iota(rank.begin(), rank.end(), 0);
  std::sort(rank.begin(), rank.end(), [&score](int a, int b) {
    return score(a) != score(b) ? score(a) < score(b) : a < b;
  });
  std::vector<int> labels(static_cast<std::size_t>(n), 0);
  for (int r = 0; r < n_pos; ++r) {
    labels[static_cast<std::size_t>(rank[static_cast<std::size_t>(r)])] = 1;
  }
  return labels;
}

int hamming(const std::vector<int>& a, const std::vector<int>& b) {
  int h = 0;
  for (std::size_t i = 0; i < a.size(); ++i) h += a[i] != b[i];
  return h;
}

}  // namespace

TEST_SUITE("datagen") {

TEST_CASE("columns come out family-major with the right kinds") {
  DataGenConfig cfg;
  cfg.features_per_family = 2;
  cfg.n_samples = 300;
  cfg.seed = 7;
  const GeneratedData g = generate(cfg);
  REQUIRE(g.data.num_features() == 16);
  REQUIRE(g.data.num_rows() == 300);
  CHECK(g.data.num_classes == 2);
  REQUIRE(g.audit.columns.size() == 16);
  int col = 0;
  for (FeatureFamily fam : kOrder) {
    for (int i = 0; i < 2; ++i, ++col) {
      const auto& sc = g.data.schema.columns[static_cast<std::size_t>(col)];
      CHECK(sc.name == std::string(family_name(fam)) + "_" + std::to_string(i));
      CHECK(g.audit.columns[static_cast<std::size_t>(col)].family == fam);
      if (family_is_continuous(fam)) {
        CHECK(sc.kind == ColumnKind::Continuous);
        CHECK(sc.vocabulary.empty());
      } else {
        CHECK(sc.kind == ColumnKind::Discrete);
        CHECK(!sc.vocabulary.empty());
      }
    }
  }
  CHECK_NOTHROW(g.data.validate());
  REQUIRE(g.data.clean_labels.has_value());
  REQUIRE(g.data.noisy_labels.has_value());
}

TEST_CASE("class sizes and flip counts are exact") {
  for (const auto& [n, balance, noise] :
       {std::tuple{500, 0.31, 0.1}, {401, 0.5, 0.05}, {1000, 0.2024, 0.0},
        {250, 0.77, 0.333}}) {
    DataGenConfig cfg;
    cfg.features_per_family = 1;
    cfg.n_samples = n;
    cfg.balance = balance;
    cfg.noise_pct = noise;
    cfg.seed = 11;
    const GeneratedData g = generate(cfg);
    const auto& clean = *g.data.clean_labels;
    const int got_pos = static_cast<int>(std::count(clean.begin(), clean.end(), 1));
    CHECK(got_pos == static_cast<int>(std::llround(balance * n)));
    const int expect_flips = static_cast<int>(std::ceil(noise * n - 1e-9));
    CHECK(g.audit.flips == expect_flips);
    CHECK(hamming(clean, *g.data.noisy_labels) == expect_flips);
    if (noise == 0.0) CHECK(clean == *g.data.noisy_labels);
  }
}

TEST_CASE("clean labels reproduce from the audited polynomial") {
  DataGenConfig cfg;
  cfg.features_per_family = 1;
  cfg.n_samples = 500;
  cfg.balance = 0.3;
  cfg.poly_degree = 2;
  cfg.seed = 23;
  const GeneratedData g = generate(cfg);
  REQUIRE(g.audit.linear_coeffs.size() == 8);
  CHECK(g.audit.interactions.size() == 4);  // one round of floor(8/2)
  const std::vector<int> oracle = labels_from_audit(g.data, g.audit, cfg.balance);
  CHECK(oracle == *g.data.clean_labels);
  for (const auto& t : g.audit.interactions) {
    CHECK(t.a != t.b);
    CHECK(t.a >= 0);
    CHECK(t.a < 8);
    CHECK(t.b >= 0);
    CHECK(t.b < 8);
  }

  DataGenConfig linear = cfg;
  linear.poly_degree = 1;
  const GeneratedData gl = generate(linear);
  CHECK(gl.audit.interactions.empty());
  CHECK(labels_from_audit(gl.data, gl.audit, cfg.balance) == *gl.data.clean_labels);

  DataGenConfig cubic = cfg;
  cubic.poly_degree = 3;
  const GeneratedData gc = generate(cubic);
  CHECK(gc.audit.interactions.size() == 8);  // two rounds
  CHECK(labels_from_audit(gc.data, gc.audit, cfg.balance) == *gc.data.clean_labels);
}

TEST_CASE("audited parameters stay inside the configured ranges") {
  DataGenConfig cfg;
  cfg.features_per_family = 3;
  cfg.n_samples = 100;
  cfg.seed = 31;
  const GeneratedData g = generate(cfg);
  const ParamRanges& r = cfg.param_ranges;
  for (const auto& a : g.audit.columns) {
    switch (a.family) {
      case FeatureFamily::Normal:
        CHECK(param(a, "mu") >= r.normal_mu.lo);
        CHECK(param(a, "mu") <= r.normal_mu.hi);
        CHECK(param(a, "sigma") >= r.normal_sigma.lo);
        CHECK(param(a, "sigma") <= r.normal_sigma.hi);
        break;
      case FeatureFamily::Beta:
        CHECK(param(a, "a") >= r.beta_a.lo);
        CHECK(param(a, "a") <= r.beta_a.hi);
        CHECK(param(a, "b") >= r.beta_b.lo);
        CHECK(param(a, "b") <= r.beta_b.hi);
        break;
      case FeatureFamily::Wald:
        CHECK(param(a, "mu") >= r.wald_mu.lo);
        CHECK(param(a, "mu") <= r.wald_mu.hi);
        CHECK(param(a, "lambda") >= r.wald_lambda.lo);
        CHECK(param(a, "lambda") <= r.wald_lambda.hi);
        break;
      case FeatureFamily::Laplace:
        CHECK(param(a, "loc") >= r.laplace_loc.lo);
        CHECK(param(a, "loc") <= r.laplace_loc.hi);
        CHECK(param(a, "scale") >= r.laplace_scale.lo);
        CHECK(param(a, "scale") <= r.laplace_scale.hi);
        break;
      case FeatureFamily::Binomial: {
        const double trials = param(a, "n");
        CHECK(trials == std::floor(trials));
        CHECK(trials >= r.binomial_n.lo);
        CHECK(trials <= r.binomial_n.hi);
        CHECK(param(a, "p") >= r.binomial_p.lo);
        CHECK(param(a, "p") <= r.binomial_p.hi);
        break;
      }
      case FeatureFamily::Multinomial: {
        const double cats = param(a, "categories");
        CHECK(cats >= r.multinomial_categories.lo);
        CHECK(cats <= r.multinomial_categories.hi);
        REQUIRE(a.category_probs.size() == static_cast<std::size_t>(cats));
        double total = 0.0;
        for (double p : a.category_probs) {
          CHECK(p >= 0.0);
          total += p;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
        break;
      }
      case FeatureFamily::Geometric:
        CHECK(param(a, "p") >= r.geometric_p.lo);
        CHECK(param(a, "p") <= r.geometric_p.hi);
        break;
      case FeatureFamily::Poisson:
        CHECK(param(a, "lambda") >= r.poisson_lambda.lo);
        CHECK(param(a, "lambda") <= r.poisson_lambda.hi);
        break;
    }
  }
}

TEST_CASE("column moments track the audited parameters") {
  DataGenConfig cfg;
  cfg.features_per_family = 1;
  cfg.n_samples = 4000;
  cfg.seed = 47;
  const GeneratedData g = generate(cfg);
  const int n = cfg.n_samples;
  for (int col = 0; col < 8; ++col) {
    const ColumnAudit& a = g.audit.columns[static_cast<std::size_t>(col)];
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += decode_cell(g.data, i, col);
    mean /= n;
    double expect = 0.0;
    double var = 0.0;
    switch (a.family) {
      case FeatureFamily::Normal: {
        expect = param(a, "mu");
        var = param(a, "sigma") * param(a, "sigma");
        break;
      }
      case FeatureFamily::Beta: {
        const double pa = param(a, "a"), pb = param(a, "b");
        expect = pa / (pa + pb);
        var = pa * pb / ((pa + pb) * (pa + pb) * (pa + pb + 1.0));
        break;
      }
      case FeatureFamily::Wald: {
        const double mu = param(a, "mu");
        expect = mu;
        var = mu * mu * mu / param(a, "lambda");
        break;
      }
      case FeatureFamily::Laplace: {
        expect = param(a, "loc");
        var = 2.0 * param(a, "scale") * param(a, "scale");
        break;
      }
      case FeatureFamily::Binomial: {
        const double t = param(a, "n"), p = param(a, "p");
        expect = t * p;
        var = t * p * (1.0 - p);
        break;
      }
      case FeatureFamily::Multinomial: {
        // Frequency check instead of a mean check.
        std::vector<int> counts(a.category_probs.size(), 0);
        for (int i = 0; i < n; ++i) {
          ++counts[static_cast<std::size_t>(std::llround(decode_cell(g.data, i, col)))];
        }
        for (std::size_t c = 0; c < counts.size(); ++c) {
          const double p = a.category_probs[c];
          const double freq = static_cast<double>(counts[c]) / n;
          CHECK(std::abs(freq - p) <= 5.0 * std::sqrt(p * (1.0 - p) / n) + 1e-3);
        }
        continue;
      }
      case FeatureFamily::Geometric: {
        const double p = param(a, "p");
        expect = (1.0 - p) / p;
        var = (1.0 - p) / (p * p);
        break;
      }
      case FeatureFamily::Poisson: {
        expect = param(a, "lambda");
        var = expect;
        break;
      }
    }
    CHECK_MESSAGE(std::abs(mean - expect) <= 5.0 * std::sqrt(var / n),
                  family_name(a.family) << " mean " << mean << " vs " << expect);
  }
}

TEST_CASE("discrete vocabularies list the observed support ascending") {
  DataGenConfig cfg;
  cfg.features_per_family = 1;
  cfg.n_samples = 600;
  cfg.seed = 53;
  const GeneratedData g = generate(cfg);
  for (int col = 0; col < g.data.num_features(); ++col) {
    const auto& sc = g.data.schema.columns[static_cast<std::size_t>(col)];
    if (sc.kind != ColumnKind::Discrete) continue;
    for (std::size_t v = 1; v < sc.vocabulary.size(); ++v) {
      CHECK(std::stod(sc.vocabulary[v - 1]) < std::stod(sc.vocabulary[v]));
    }
    std::vector<bool> seen(sc.vocabulary.size(), false);
    for (int i = 0; i < g.data.num_rows(); ++i) {
      const double cell = g.data.features(i, col);
      CHECK(cell == std::floor(cell));
      CHECK(cell >= 0.0);
      REQUIRE(cell < static_cast<double>(sc.vocabulary.size()));
      seen[static_cast<std::size_t>(cell)] = true;
    }
    // Every vocabulary entry was observed: the support is exact, not padded.
    CHECK(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }));
  }
}

TEST_CASE("generation is deterministic in the seed") {
  DataGenConfig cfg;
  cfg.features_per_family = 1;
  cfg.n_samples = 200;
  cfg.noise_pct = 0.1;
  cfg.seed = 61;
  const GeneratedData a = generate(cfg);
  const GeneratedData b = generate(cfg);
  CHECK(a.data.features == b.data.features);
  CHECK(*a.data.clean_labels == *b.data.clean_labels);
  CHECK(*a.data.noisy_labels == *b.data.noisy_labels);
  CHECK(a.audit.linear_coeffs == b.audit.linear_coeffs);
  CHECK(a.audit.score_threshold == b.audit.score_threshold);
  cfg.seed = 62;
  const GeneratedData c = generate(cfg);
  CHECK(a.data.features != c.data.features);
}

TEST_CASE("audit json round trips the essentials") {
  DataGenConfig cfg;
  cfg.features_per_family = 1;
  cfg.n_samples = 150;
  cfg.noise_pct = 0.2;
  cfg.seed = 67;
  const GeneratedData g = generate(cfg);
  const auto path = (std::filesystem::temp_directory_path() / "gen_audit.json").string();
  save_audit_json(g.audit, path);
  std::ifstream in(path);
  REQUIRE(in.good());
  const nlohmann::json j = nlohmann::json::parse(in);
  REQUIRE(j["columns"].size() == 8);
  CHECK(j["columns"][0]["family"] == "normal");
  CHECK(j["columns"][5]["family"] == "multinomial");
  CHECK(j["columns"][0]["params"]["mu"].get<double>() ==
        param(g.audit.columns[0], "mu"));
  CHECK(j["linear_coeffs"].size() == 8);
  CHECK(j["interactions"].size() == g.audit.interactions.size());
  CHECK(j["score_threshold"].get<double>() == g.audit.score_threshold);
  CHECK(j["flips"].get<int>() == g.audit.flips);
  std::filesystem::remove(path);
}

TEST_CASE("invalid configurations are rejected") {
  DataGenConfig ok;
  ok.features_per_family = 1;
  ok.n_samples = 50;
  CHECK_NOTHROW(generate(ok));
  DataGenConfig bad = ok;
  bad.features_per_family = 0;
  CHECK_THROWS(generate(bad));
  bad = ok;
  bad.n_samples = 1;
  CHECK_THROWS(generate(bad));
  bad = ok;
  bad.balance = 0.0;
  CHECK_THROWS(generate(bad));
  bad = ok;
  bad.balance = 1.0;
  CHECK_THROWS(generate(bad));
  bad = ok;
  bad.noise_pct = 1.0;
  CHECK_THROWS(generate(bad));
  bad = ok;
  bad.poly_degree = 0;
  CHECK_THROWS(generate(bad));
  bad = ok;
  bad.param_ranges.normal_sigma = {2.0, 0.5};
  CHECK_THROWS(generate(bad));
  bad = ok;
  bad.n_samples = 20;
  bad.balance = 0.01;  // rounds to zero positives
  CHECK_THROWS(generate(bad));
}

}
