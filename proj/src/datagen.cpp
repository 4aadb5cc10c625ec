#include "crowdteacher/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "crowdteacher/rng.hpp"
#include "crowdteacher/stats.hpp"

namespace crowdteacher {

namespace {

constexpr FeatureFamily kFamilies[] = {
    FeatureFamily::Normal,    FeatureFamily::Beta,      FeatureFamily::Wald,
    FeatureFamily::Laplace,   FeatureFamily::Binomial,  FeatureFamily::Multinomial,
    FeatureFamily::Geometric, FeatureFamily::Poisson,
};

constexpr std::uint64_t kColumnStreamBase = 0xC000;
constexpr std::uint64_t kPolyStream = 0xD1;
constexpr std::uint64_t kFlipStream = 0xD2;

double draw(Range r, std::mt19937_64& rng) {
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

int draw(IntRange r, std::mt19937_64& rng) {
  return std::uniform_int_distribution<int>(r.lo, r.hi)(rng);
}

void check_range(Range r, const char* what) {
  if (!(r.lo <= r.hi)) throw std::invalid_argument(std::string("bad range for ") + what);
}

void check_ranges(const ParamRanges& p) {
  check_range(p.normal_mu, "normal mu");
  check_range(p.normal_sigma, "normal sigma");
  check_range(p.beta_a, "beta a");
  check_range(p.beta_b, "beta b");
  check_range(p.wald_mu, "wald mu");
  check_range(p.wald_lambda, "wald lambda");
  check_range(p.laplace_loc, "laplace loc");
  check_range(p.laplace_scale, "laplace scale");
  check_range(p.binomial_p, "binomial p");
  check_range(p.geometric_p, "geometric p");
  check_range(p.poisson_lambda, "poisson lambda");
  if (p.binomial_n.lo < 1 || p.binomial_n.lo > p.binomial_n.hi) {
    throw std::invalid_argument("bad range for binomial n");
  }
  if (p.multinomial_categories.lo < 2 ||
      p.multinomial_categories.lo > p.multinomial_categories.hi) {
    throw std::invalid_argument("bad range for multinomial categories");
  }
}

// One column: draws parameters, then n values, audited.
void generate_column(FeatureFamily fam, const ParamRanges& ranges, int n,
                     std::mt19937_64& rng, std::vector<double>& values,
                     ColumnAudit& audit) {
  values.resize(static_cast<std::size_t>(n));
  audit.family = fam;
  switch (fam) {
    case FeatureFamily::Normal: {
      const double mu = draw(ranges.normal_mu, rng);
      const double sigma = draw(ranges.normal_sigma, rng);
      audit.params = {{"mu", mu}, {"sigma", sigma}};
      std::normal_distribution<double> dist(mu, sigma);
      for (auto& v : values) v = dist(rng);
      break;
    }
    case FeatureFamily::Beta: {
      const double a = draw(ranges.beta_a, rng);
      const double b = draw(ranges.beta_b, rng);
      audit.params = {{"a", a}, {"b", b}};
      for (auto& v : values) v = sample_beta(rng, a, b);
      break;
    }
    case FeatureFamily::Wald: {
      const double mu = draw(ranges.wald_mu, rng);
      const double lambda = draw(ranges.wald_lambda, rng);
      audit.params = {{"mu", mu}, {"lambda", lambda}};
      for (auto& v : values) v = sample_wald(rng, mu, lambda);
      break;
    }
    case FeatureFamily::Laplace: {
      const double loc = draw(ranges.laplace_loc, rng);
      const double scale = draw(ranges.laplace_scale, rng);
      audit.params = {{"loc", loc}, {"scale", scale}};
      for (auto& v : values) v = sample_laplace(rng, loc, scale);
      break;
    }
    case FeatureFamily::Binomial: {
      const int trials = draw(ranges.binomial_n, rng);
      const double p = draw(ranges.binomial_p, rng);
      audit.params = {{"n", static_cast<double>(trials)}, {"p", p}};
      std::binomial_distribution<int> dist(trials, p);
      for (auto& v : values) v = static_cast<double>(dist(rng));
      break;
    }
    case FeatureFamily::Multinomial: {
      const int cats = draw(ranges.multinomial_categories, rng);
      audit.params = {{"categories", static_cast<double>(cats)}};
      std::exponential_distribution<double> gamma1(1.0);
      audit.category_probs.resize(static_cast<std::size_t>(cats));
      double total = 0.0;
      for (auto& p : audit.category_probs) {
        p = gamma1(rng);
        total += p;
      }
      for (auto& p : audit.category_probs) p /= total;
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      for (auto& v : values) {
        const double u = unif(rng);
        double cum = 0.0;
        int c = cats - 1;
        for (int j = 0; j < cats; ++j) {
          cum += audit.category_probs[static_cast<std::size_t>(j)];
          if (u < cum) {
            c = j;
            break;
          }
        }
        v = static_cast<double>(c);
      }
      break;
    }
    case FeatureFamily::Geometric: {
      const double p = draw(ranges.geometric_p, rng);
      audit.params = {{"p", p}};
      std::geometric_distribution<int> dist(p);
      for (auto& v : values) v = static_cast<double>(dist(rng));
      break;
    }
    case FeatureFamily::Poisson: {
      const double lambda = draw(ranges.poisson_lambda, rng);
      audit.params = {{"lambda", lambda}};
      std::poisson_distribution<int> dist(lambda);
      for (auto& v : values) v = static_cast<double>(dist(rng));
      break;
    }
  }
}

}  // namespace

const char* family_name(FeatureFamily f) {
  switch (f) {
    case FeatureFamily::Normal: return "normal";
    case FeatureFamily::Beta: return "beta";
    case FeatureFamily::Wald: return "wald";
    case FeatureFamily::Laplace: return "laplace";
    case FeatureFamily::Binomial: return "binomial";
    case FeatureFamily::Multinomial: return "multinomial";
    case FeatureFamily::Geometric: return "geometric";
    case FeatureFamily::Poisson: return "poisson";
  }
  return "unknown";
}

bool family_is_continuous(FeatureFamily f) {
  switch (f) {
    case FeatureFamily::Normal:
    case FeatureFamily::Beta:
    case FeatureFamily::Wald:
    case FeatureFamily::Laplace:
      return true;
    default:
      return false;
  }
}

GeneratedData generate(const DataGenConfig& cfg) {
  if (cfg.features_per_family < 1) throw std::invalid_argument("features_per_family must be >= 1");
  if (cfg.n_samples < 2) throw std::invalid_argument("n_samples must be >= 2");
  if (!(cfg.balance > 0.0 && cfg.balance < 1.0)) throw std::invalid_argument("balance must lie in (0,1)");
  if (!(cfg.noise_pct >= 0.0 && cfg.noise_pct < 1.0)) throw std::invalid_argument("noise_pct must lie in [0,1)");
  if (cfg.poly_degree < 1) throw std::invalid_argument("poly_degree must be >= 1");
  check_ranges(cfg.param_ranges);

  const int n = cfg.n_samples;
  const int m = 8 * cfg.features_per_family;

  GeneratedData out;
  out.data.schema.columns.resize(static_cast<std::size_t>(m));
  out.data.features.resize(n, m);
  out.audit.columns.resize(static_cast<std::size_t>(m));

  std::vector<double> values;
  int col = 0;
  for (FeatureFamily fam : kFamilies) {
    for (int i = 0; i < cfg.features_per_family; ++i, ++col) {
      auto rng = make_rng(derive_seed(cfg.seed, kColumnStreamBase + static_cast<std::uint64_t>(col)));
      auto& audit = out.audit.columns[static_cast<std::size_t>(col)];
      generate_column(fam, cfg.param_ranges, n, rng, values, audit);

      auto& schema_col = out.data.schema.columns[static_cast<std::size_t>(col)];
      schema_col.name = std::string(family_name(fam)) + "_" + std::to_string(i);
      if (family_is_continuous(fam)) {
        schema_col.kind = ColumnKind::Continuous;
        for (int r = 0; r < n; ++r) out.data.features(r, col) = values[static_cast<std::size_t>(r)];
      } else {
        // Discrete cells store indices into the observed-support vocabulary,
        // kept in ascending numeric order.
        schema_col.kind = ColumnKind::Discrete;
        std::vector<double> support = values;
        std::sort(support.begin(), support.end());
        support.erase(std::unique(support.begin(), support.end()), support.end());
        std::map<double, int> index;
        schema_col.vocabulary.clear();
        for (double v : support) {
          index[v] = static_cast<int>(schema_col.vocabulary.size());
          schema_col.vocabulary.push_back(std::to_string(static_cast<long long>(v)));
        }
        for (int r = 0; r < n; ++r) {
          out.data.features(r, col) = index[values[static_cast<std::size_t>(r)]];
        }
      }
    }
  }

  // Random polynomial over standardized cell values: one coefficient per
  // column, then floor(M/2) pairwise interaction terms per extra degree.
  Eigen::MatrixXd z = out.data.features;
  for (int j = 0; j < m; ++j) {
    const double mean = z.col(j).mean();
    double sd = std::sqrt((z.col(j).array() - mean).square().mean());
    if (sd == 0.0) sd = 1.0;
    z.col(j) = (z.col(j).array() - mean) / sd;
  }
  auto poly_rng = make_rng(derive_seed(cfg.seed, kPolyStream));
  std::uniform_real_distribution<double> coeff(-1.0, 1.0);
  out.audit.linear_coeffs.resize(static_cast<std::size_t>(m));
  Eigen::VectorXd score = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < m; ++j) {
    const double c = coeff(poly_rng);
    out.audit.linear_coeffs[static_cast<std::size_t>(j)] = c;
    score += c * z.col(j);
  }
  std::uniform_int_distribution<int> col_pick(0, m - 1);
  for (int round = 1; round < cfg.poly_degree; ++round) {
    for (int t = 0; t < m / 2; ++t) {
      const int a = col_pick(poly_rng);
      int b = std::uniform_int_distribution<int>(0, m - 2)(poly_rng);
      if (b >= a) ++b;
      const double c = coeff(poly_rng);
      out.audit.interactions.push_back({a, b, c});
      score += c * z.col(a).cwiseProduct(z.col(b));
    }
  }
  if (score.maxCoeff() == score.minCoeff()) {
    throw std::runtime_error("degenerate labeling: all scores equal");
  }

  // Lowest balance-percentile of scores is the positive class.
  const int n_pos = static_cast<int>(std::llround(cfg.balance * n));
  if (n_pos < 1 || n_pos >= n) throw std::invalid_argument("balance leaves an empty class");
  std::vector<int> rank(static_cast<std::size_t>(n));
  std::iota(rank.begin(), rank.end(), 0);
  std::sort(rank.begin(), rank.end(), [&score](int a, int b) {
    return score(a) != score(b) ? score(a) < score(b) : a < b;
  });
  std::vector<int> clean(static_cast<std::size_t>(n), 0);
  for (int r = 0; r < n_pos; ++r) clean[static_cast<std::size_t>(rank[static_cast<std::size_t>(r)])] = 1;
  out.audit.score_threshold = score(rank[static_cast<std::size_t>(n_pos - 1)]);

  std::vector<int> noisy = clean;
  const int flips = static_cast<int>(std::ceil(cfg.noise_pct * n - 1e-9));
  out.audit.flips = flips;
  if (flips > 0) {
    auto flip_rng = make_rng(derive_seed(cfg.seed, kFlipStream));
    std::vector<int> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), 0);
    for (int t = 0; t < flips; ++t) {
      std::uniform_int_distribution<int> pick(t, n - 1);
      std::swap(pool[static_cast<std::size_t>(t)], pool[static_cast<std::size_t>(pick(flip_rng))]);
      const int i = pool[static_cast<std::size_t>(t)];
      noisy[static_cast<std::size_t>(i)] = 1 - noisy[static_cast<std::size_t>(i)];
    }
  }

  out.data.clean_labels = std::move(clean);
  out.data.noisy_labels = std::move(noisy);
  out.data.num_classes = 2;
  out.data.validate();
  return out;
}

void save_audit_json(const GenAudit& a, const std::string& path) {
  nlohmann::json j;
  j["columns"] = nlohmann::json::array();
  for (const auto& col : a.columns) {
    nlohmann::json entry;
    entry["family"] = family_name(col.family);
    for (const auto& [key, value] : col.params) entry["params"][key] = value;
    if (!col.category_probs.empty()) entry["category_probs"] = col.category_probs;
    j["columns"].push_back(std::move(entry));
  }
  j["linear_coeffs"] = a.linear_coeffs;
  j["interactions"] = nlohmann::json::array();
  for (const auto& term : a.interactions) {
    j["interactions"].push_back({{"a", term.a}, {"b", term.b}, {"coeff", term.coeff}});
  }
  j["score_threshold"] = a.score_threshold;
  j["flips"] = a.flips;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << j.dump(2) << '\n';
}

}  // namespace crowdteacher
