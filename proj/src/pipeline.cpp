#include "crowdteacher/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <thread>
#include <utility>

#include <json.hpp>

#include "crowdteacher/copula.hpp"
#include "crowdteacher/rng.hpp"
#include "crowdteacher/truth_inference.hpp"

namespace crowdteacher {

namespace {

// One stream tag per pipeline stage; stages never share a tag, and none
// depends on the method, so upstream artifacts are method-invariant.
constexpr std::uint64_t kDataStream = 10;
constexpr std::uint64_t kSplitStream = 11;
constexpr std::uint64_t kSimStream = 12;
constexpr std::uint64_t kPoolStream = 13;
constexpr std::uint64_t kTrainStream = 14;
constexpr std::uint64_t kPerturbStream = 15;

template <typename F>
auto run_stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("stage ") + name + ": " + e.what());
  }
}

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                const char* where) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* a : allowed) {
      if (item.key() == a) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw std::invalid_argument("unknown config key '" + item.key() + "' in " + where);
    }
  }
}

Range parse_range(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 2) {
    throw std::invalid_argument(std::string("expected [lo, hi] for ") + what);
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

IntRange parse_int_range(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 2) {
    throw std::invalid_argument(std::string("expected [lo, hi] for ") + what);
  }
  return {j[0].get<int>(), j[1].get<int>()};
}

void parse_param_ranges(const nlohmann::json& j, ParamRanges& p) {
  check_keys(j,
             {"normal_mu", "normal_sigma", "beta_a", "beta_b", "wald_mu", "wald_lambda",
              "laplace_loc", "laplace_scale", "binomial_n", "binomial_p",
              "multinomial_categories", "geometric_p", "poisson_lambda"},
             "param_ranges");
  if (j.contains("normal_mu")) p.normal_mu = parse_range(j["normal_mu"], "normal_mu");
  if (j.contains("normal_sigma")) p.normal_sigma = parse_range(j["normal_sigma"], "normal_sigma");
  if (j.contains("beta_a")) p.beta_a = parse_range(j["beta_a"], "beta_a");
  if (j.contains("beta_b")) p.beta_b = parse_range(j["beta_b"], "beta_b");
  if (j.contains("wald_mu")) p.wald_mu = parse_range(j["wald_mu"], "wald_mu");
  if (j.contains("wald_lambda")) p.wald_lambda = parse_range(j["wald_lambda"], "wald_lambda");
  if (j.contains("laplace_loc")) p.laplace_loc = parse_range(j["laplace_loc"], "laplace_loc");
  if (j.contains("laplace_scale")) p.laplace_scale = parse_range(j["laplace_scale"], "laplace_scale");
  if (j.contains("binomial_n")) p.binomial_n = parse_int_range(j["binomial_n"], "binomial_n");
  if (j.contains("binomial_p")) p.binomial_p = parse_range(j["binomial_p"], "binomial_p");
  if (j.contains("multinomial_categories")) {
    p.multinomial_categories = parse_int_range(j["multinomial_categories"], "multinomial_categories");
  }
  if (j.contains("geometric_p")) p.geometric_p = parse_range(j["geometric_p"], "geometric_p");
  if (j.contains("poisson_lambda")) p.poisson_lambda = parse_range(j["poisson_lambda"], "poisson_lambda");
}

FeatureSchema parse_schema(const nlohmann::json& j) {
  FeatureSchema schema;
  for (const auto& jc : j) {
    check_keys(jc, {"name", "kind", "vocabulary"}, "schema column");
    Column col;
    col.name = jc.at("name").get<std::string>();
    const std::string kind = jc.at("kind").get<std::string>();
    if (kind == "continuous") {
      col.kind = ColumnKind::Continuous;
    } else if (kind == "discrete") {
      col.kind = ColumnKind::Discrete;
    } else {
      throw std::invalid_argument("column kind must be continuous or discrete");
    }
    if (jc.contains("vocabulary")) {
      col.vocabulary = jc["vocabulary"].get<std::vector<std::string>>();
    }
    schema.columns.push_back(std::move(col));
  }
  return schema;
}

std::string cell_id(const std::string& method, double tau, double alpha,
                    std::uint64_t seed) {
  return method + "_tau" + format_double(tau) + "_alpha" + format_double(alpha) +
         "_seed" + std::to_string(seed);
}

struct Moments {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 below two points
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return m;
}

}  // namespace

const char* method_name(Method m) {
  switch (m) {
    case Method::BaseClf: return "base_clf";
    case Method::VCoteach: return "v_coteach";
    case Method::PCoteach: return "p_coteach";
    case Method::CrowdTeacher: return "crowdteacher";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  if (name == "base_clf") return Method::BaseClf;
  if (name == "v_coteach") return Method::VCoteach;
  if (name == "p_coteach") return Method::PCoteach;
  if (name == "crowdteacher") return Method::CrowdTeacher;
  throw std::invalid_argument("unknown method: " + name);
}

ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;
  cfg.data.gen.n_samples = 2000;
  cfg.data.gen.balance = 0.31;
  cfg.data.gen.noise_pct = 0.1;
  cfg.sim.num_annotators = 5;
  cfg.sim.tau = 0.2024;
  // Mid-reliability annotators (mean 2/3 before scaling to [50,100]); near-perfect
  // annotators leave no certainty spread for the methods to respond to.
  cfg.sim.beta_a = 2.0;
  cfg.sim.beta_b = 4.0;
  cfg.perturb.alpha = 0.11;
  // Benchmark training settings: large batches and a low rate keep paired
  // method comparisons stable; 70 epochs sits at the augmentation optimum.
  cfg.coteach.epochs = 70;
  cfg.coteach.batch_size = 256;
  cfg.coteach.lr = 5e-4;
  // Redraw each sample's perturbation every epoch so perturbed training acts
  // as augmentation; one frozen draw only corrupts the features.
  cfg.reperturb_each_epoch = true;
  cfg.methods = {Method::BaseClf, Method::VCoteach, Method::PCoteach,
                 Method::CrowdTeacher};
  cfg.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  nlohmann::json j;
  in >> j;

  ExperimentConfig cfg = default_experiment_config();
  check_keys(j,
             {"data", "sim", "method", "methods", "perturb", "coteach", "test_fraction",
              "sweep", "seeds", "out", "dump_stages", "reperturb_each_epoch", "jobs"},
             "config");

  if (j.contains("data")) {
    const auto& jd = j["data"];
    check_keys(jd,
               {"source", "csv_path", "schema", "features_per_family", "n_samples",
                "balance", "noise_pct", "poly_degree", "param_ranges"},
               "data");
    const std::string source = jd.value("source", "generated");
    if (source == "generated") {
      cfg.data.generated = true;
    } else if (source == "csv") {
      cfg.data.generated = false;
      cfg.data.csv_path = jd.at("csv_path").get<std::string>();
      if (jd.contains("schema")) cfg.data.csv_schema = parse_schema(jd["schema"]);
    } else {
      throw std::invalid_argument("data source must be 'generated' or 'csv'");
    }
    auto& g = cfg.data.gen;
    if (jd.contains("features_per_family")) g.features_per_family = jd["features_per_family"].get<int>();
    if (jd.contains("n_samples")) g.n_samples = jd["n_samples"].get<int>();
    if (jd.contains("balance")) g.balance = jd["balance"].get<double>();
    if (jd.contains("noise_pct")) g.noise_pct = jd["noise_pct"].get<double>();
    if (jd.contains("poly_degree")) g.poly_degree = jd["poly_degree"].get<int>();
    if (jd.contains("param_ranges")) parse_param_ranges(jd["param_ranges"], g.param_ranges);
  }

  if (j.contains("sim")) {
    const auto& js = j["sim"];
    check_keys(js, {"R", "tau", "beta_a", "beta_b", "negative_flip_ratio"}, "sim");
    if (js.contains("R")) cfg.sim.num_annotators = js["R"].get<int>();
    if (js.contains("tau")) cfg.sim.tau = js["tau"].get<double>();
    if (js.contains("beta_a")) cfg.sim.beta_a = js["beta_a"].get<double>();
    if (js.contains("beta_b")) cfg.sim.beta_b = js["beta_b"].get<double>();
    if (js.contains("negative_flip_ratio")) {
      cfg.sim.negative_flip_ratio = js["negative_flip_ratio"].get<double>();
    }
  }

  if (j.contains("method")) cfg.method = parse_method(j["method"].get<std::string>());
  if (j.contains("methods")) {
    cfg.methods.clear();
    for (const auto& name : j["methods"]) {
      cfg.methods.push_back(parse_method(name.get<std::string>()));
    }
  }

  if (j.contains("perturb")) {
    const auto& jp = j["perturb"];
    check_keys(jp, {"alpha", "knn_fraction", "mode"}, "perturb");
    if (jp.contains("alpha")) cfg.perturb.alpha = jp["alpha"].get<double>();
    if (jp.contains("knn_fraction")) cfg.perturb.knn_fraction = jp["knn_fraction"].get<double>();
    if (jp.contains("mode")) {
      const std::string mode = jp["mode"].get<std::string>();
      if (mode == "certainty_weighted") {
        cfg.perturb.mode = PerturbMode::CertaintyWeighted;
      } else if (mode == "uniform") {
        cfg.perturb.mode = PerturbMode::Uniform;
      } else {
        throw std::invalid_argument("perturb mode must be certainty_weighted or uniform");
      }
    }
  }

  if (j.contains("coteach")) {
    const auto& jc = j["coteach"];
    check_keys(jc,
               {"teacher_hidden", "student_hidden", "epochs", "batch_size",
                "noise_rate_estimate", "ramp_epochs", "lr", "prediction_mode"},
               "coteach");
    if (jc.contains("teacher_hidden")) cfg.coteach.teacher_hidden = jc["teacher_hidden"].get<int>();
    if (jc.contains("student_hidden")) cfg.coteach.student_hidden = jc["student_hidden"].get<int>();
    if (jc.contains("epochs")) cfg.coteach.epochs = jc["epochs"].get<int>();
    if (jc.contains("batch_size")) cfg.coteach.batch_size = jc["batch_size"].get<int>();
    if (jc.contains("noise_rate_estimate")) {
      const auto& jn = jc["noise_rate_estimate"];
      if (jn.is_string()) {
        if (jn.get<std::string>() != "from_certainty") {
          throw std::invalid_argument("noise_rate_estimate must be a number or 'from_certainty'");
        }
        cfg.coteach.noise_rate_estimate.reset();
      } else {
        cfg.coteach.noise_rate_estimate = jn.get<double>();
      }
    }
    if (jc.contains("ramp_epochs")) cfg.coteach.ramp_epochs = jc["ramp_epochs"].get<int>();
    if (jc.contains("lr")) cfg.coteach.lr = jc["lr"].get<double>();
    if (jc.contains("prediction_mode")) {
      const std::string mode = jc["prediction_mode"].get<std::string>();
      if (mode == "average_both") {
        cfg.coteach.prediction_mode = PredictionMode::AverageBoth;
      } else if (mode == "teacher_only") {
        cfg.coteach.prediction_mode = PredictionMode::TeacherOnly;
      } else {
        throw std::invalid_argument("prediction_mode must be average_both or teacher_only");
      }
    }
  }

  if (j.contains("test_fraction")) cfg.test_fraction = j["test_fraction"].get<double>();
  if (j.contains("sweep")) {
    const auto& jw = j["sweep"];
    check_keys(jw, {"tau", "alpha"}, "sweep");
    if (jw.contains("tau")) cfg.tau_grid = jw["tau"].get<std::vector<double>>();
    if (jw.contains("alpha")) cfg.alpha_grid = jw["alpha"].get<std::vector<double>>();
  }
  if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  if (j.contains("out")) cfg.out_dir = j["out"].get<std::string>();
  if (j.contains("dump_stages")) cfg.dump_stages = j["dump_stages"].get<bool>();
  if (j.contains("reperturb_each_epoch")) {
    cfg.reperturb_each_epoch = j["reperturb_each_epoch"].get<bool>();
  }
  if (j.contains("jobs")) cfg.jobs = j["jobs"].get<int>();
  return cfg;
}

PipelineResult run_pipeline(const ExperimentConfig& cfg, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const bool dump = cfg.dump_stages;
  const std::string dump_dir = cfg.out_dir + "/stages";
  if (dump) std::filesystem::create_directories(dump_dir);

  Dataset full = run_stage("data", [&]() -> Dataset {
    if (!cfg.data.generated) {
      return load_csv(cfg.data.csv_path, cfg.data.csv_schema);
    }
    DataGenConfig g = cfg.data.gen;
    g.seed = derive_seed(seed, kDataStream);
    GeneratedData gen = generate(g);
    if (dump) save_audit_json(gen.audit, dump_dir + "/data_audit.json");
    return std::move(gen.data);
  });
  if (dump) {
    save_csv(full, dump_dir + "/data.csv");
    save_schema_json(full.schema, dump_dir + "/data.schema.json");
  }

  auto split = run_stage("split", [&] {
    return split_train_test(full, cfg.test_fraction, derive_seed(seed, kSplitStream));
  });
  const Dataset& train = split.first;
  const Dataset& test = split.second;
  if (dump) {
    save_csv(train, dump_dir + "/train.csv");
    save_csv(test, dump_dir + "/test.csv");
  }

  SimConfig sim = cfg.sim;
  sim.seed = derive_seed(seed, kSimStream);
  const SimResult ann =
      run_stage("simulate", [&] { return simulate_annotations(train, sim); });
  if (dump) save_answers_csv(ann.answers, dump_dir + "/answers.csv");

  const InferenceResult inf = run_stage("infer", [&] {
    return dawid_skene(ann.answers, train.num_classes, 100, 1e-6);
  });
  if (dump) save_inference_csv(inf, dump_dir + "/inference.csv");

  PipelineResult out;
  out.avg_labels_realized = average_labels_per_sample(ann.answers);
  out.mean_certainty = inf.certainty.mean();

  const std::uint64_t train_seed = derive_seed(seed, kTrainStream);
  std::vector<double> scores(static_cast<std::size_t>(test.num_rows()));

  if (cfg.method == Method::BaseClf) {
    MlpSpec spec;
    spec.hidden_units = default_base_hidden(train.schema.num_columns());
    spec.output_dim = train.num_classes;
    spec.seed = derive_seed(train_seed, 1);
    const TrainedModel model = run_stage("train", [&] {
      return train_base(train, inf.hard_labels, spec, cfg.coteach.epochs,
                        cfg.coteach.batch_size, cfg.coteach.lr, train_seed);
    });
    if (dump) save_network_csv(model.net, dump_dir + "/network_base.csv");
    const Eigen::MatrixXd probs = predict(model, test);
    for (int i = 0; i < test.num_rows(); ++i) scores[static_cast<std::size_t>(i)] = probs(i, 1);
  } else {
    Dataset train_data = train;
    EpochDataProvider provider;
    if (cfg.method != Method::VCoteach) {
      const SyntheticPool pool = run_stage("synth", [&] {
        return sample_copula(fit_copula(train), train.num_rows(),
                             derive_seed(seed, kPoolStream));
      });
      if (dump) save_csv(pool, dump_dir + "/pool.csv");
      PerturbConfig p = cfg.perturb;
      p.mode = cfg.method == Method::PCoteach ? PerturbMode::Uniform
                                              : PerturbMode::CertaintyWeighted;
      p.seed = derive_seed(seed, kPerturbStream);
      if (cfg.reperturb_each_epoch) {
        // The plan freezes the KNN candidate sets once; each epoch only
        // redraws sources and blends, so redrawing costs no pool scans.
        auto plan = std::make_shared<const PerturbPlan>(run_stage(
            "perturb", [&] { return make_perturb_plan(train, pool, inf.certainty, p); }));
        provider = [plan, base_seed = p.seed](int epoch) {
          return draw_perturbed(
              *plan, derive_seed(base_seed, static_cast<std::uint64_t>(epoch)));
        };
        train_data = run_stage("perturb", [&] { return provider(0); });
      } else {
        train_data = run_stage(
            "perturb", [&] { return perturb_dataset(train, pool, inf.certainty, p); });
      }
      if (dump) save_csv(train_data, dump_dir + "/perturbed.csv");
    }
    CoteachConfig c = cfg.coteach;
    c.seed = train_seed;
    const TrainedPair pair = run_stage("train", [&] {
      return train_coteaching(train_data, inf.hard_labels, c, &inf.certainty, nullptr,
                              provider);
    });
    if (dump) {
      save_trace_csv(pair.trace, dump_dir + "/trace.csv");
      save_network_csv(pair.teacher, dump_dir + "/network_teacher.csv");
      save_network_csv(pair.student, dump_dir + "/network_student.csv");
    }
    const Eigen::MatrixXd probs = predict(pair, test, cfg.coteach.prediction_mode);
    for (int i = 0; i < test.num_rows(); ++i) scores[static_cast<std::size_t>(i)] = probs(i, 1);
  }

  out.eval = run_stage("eval", [&] {
    if (!test.clean_labels) throw std::invalid_argument("test split has no clean labels");
    return evaluate_scores(scores, *test.clean_labels);
  });
  out.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

SweepResult run_sweep(const ExperimentConfig& cfg) {
  const std::vector<double> taus =
      cfg.tau_grid.empty() ? std::vector<double>{cfg.sim.tau} : cfg.tau_grid;
  const std::vector<double> alphas =
      cfg.alpha_grid.empty() ? std::vector<double>{cfg.perturb.alpha} : cfg.alpha_grid;
  const std::vector<Method> methods =
      cfg.methods.empty() ? std::vector<Method>{cfg.method} : cfg.methods;
  if (cfg.seeds.empty()) throw std::invalid_argument("sweep needs at least one seed");
  if (taus.empty() || alphas.empty()) throw std::invalid_argument("empty sweep grid");

  struct Cell {
    double tau;
    double alpha;
    Method method;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (double tau : taus) {
    for (double alpha : alphas) {
      for (Method m : methods) {
        for (std::uint64_t s : cfg.seeds) cells.push_back({tau, alpha, m, s});
      }
    }
  }

  std::vector<std::optional<PipelineResult>> results(cells.size());
  std::vector<std::string> cell_errors(cells.size());
  const auto run_cell = [&](std::size_t idx) {
    const Cell& cell = cells[idx];
    ExperimentConfig c = cfg;
    c.sim.tau = cell.tau;
    c.perturb.alpha = cell.alpha;
    c.method = cell.method;
    const std::string id = cell_id(method_name(cell.method), cell.tau, cell.alpha, cell.seed);
    if (cfg.dump_stages) c.out_dir = cfg.out_dir + "/cells/" + id;
    try {
      results[idx] = run_pipeline(c, cell.seed);
    } catch (const std::exception& e) {
      cell_errors[idx] = "cell " + id + ": " + e.what();
    }
  };

  const std::size_t n_workers = std::min<std::size_t>(
      static_cast<std::size_t>(std::max(1, cfg.jobs)), cells.size());
  if (n_workers <= 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) run_cell(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    workers.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) {
          run_cell(i);
        }
      });
    }
    for (auto& t : workers) t.join();
  }

  SweepResult out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!results[i]) {
      out.errors.push_back(cell_errors[i]);
      continue;
    }
    const PipelineResult& r = *results[i];
    out.rows.push_back({method_name(cells[i].method), cells[i].tau,
                        r.avg_labels_realized, cells[i].alpha,
                        std::to_string(cells[i].seed), r.eval.auprc, r.eval.auroc,
                        r.wall_seconds});
  }

  // Aggregates over the seeds of each (tau, alpha, method) group, mirroring
  // the cell construction order.
  std::size_t idx = 0;
  std::vector<SweepRow> agg;
  for (double tau : taus) {
    for (double alpha : alphas) {
      for (Method m : methods) {
        std::vector<double> auprcs, aurocs, labels;
        for (std::size_t s = 0; s < cfg.seeds.size(); ++s, ++idx) {
          if (!results[idx]) continue;
          auprcs.push_back(results[idx]->eval.auprc);
          aurocs.push_back(results[idx]->eval.auroc);
          labels.push_back(results[idx]->avg_labels_realized);
        }
        if (auprcs.empty()) continue;
        const Moments ap = moments(auprcs);
        const Moments ar = moments(aurocs);
        const Moments al = moments(labels);
        agg.push_back({method_name(m), tau, al.mean, alpha, "mean", ap.mean, ar.mean, 0.0});
        agg.push_back({method_name(m), tau, al.stddev, alpha, "std", ap.stddev, ar.stddev, 0.0});
      }
    }
  }
  out.rows.insert(out.rows.end(), agg.begin(), agg.end());
  return out;
}

void write_sweep_csv(const SweepResult& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << "method,tau,avg_labels_realized,alpha,seed,auprc,auroc\n";
  for (const auto& row : r.rows) {
    out << row.method << ',' << format_double(row.tau) << ','
        << format_double(row.avg_labels) << ',' << format_double(row.alpha) << ','
        << row.seed << ',' << format_double(row.auprc) << ','
        << format_double(row.auroc) << '\n';
  }
}

void save_schema_json(const FeatureSchema& schema, const std::string& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& col : schema.columns) {
    nlohmann::json jc;
    jc["name"] = col.name;
    jc["kind"] = col.kind == ColumnKind::Continuous ? "continuous" : "discrete";
    if (!col.vocabulary.empty()) jc["vocabulary"] = col.vocabulary;
    j.push_back(std::move(jc));
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << j.dump(2) << '\n';
}

FeatureSchema load_schema_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open schema: " + path);
  nlohmann::json j;
  in >> j;
  return parse_schema(j);
}

void write_timing_csv(const SweepResult& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << "method,tau,alpha,seed,wall_seconds\n";
  for (const auto& row : r.rows) {
    if (row.seed == "mean" || row.seed == "std") continue;
    out << row.method << ',' << format_double(row.tau) << ','
        << format_double(row.alpha) << ',' << row.seed << ','
        << format_double(row.wall_seconds) << '\n';
  }
}

}  // namespace crowdteacher
