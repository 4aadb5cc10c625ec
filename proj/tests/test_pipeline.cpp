#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "crowdteacher/pipeline.hpp"

using namespace crowdteacher;
namespace fs = std::filesystem;

namespace {

// Small enough to keep every pipeline run in the low milliseconds.
ExperimentConfig tiny_config() {
  ExperimentConfig cfg = default_experiment_config();
  cfg.data.gen.features_per_family = 1;
  cfg.data.gen.n_samples = 200;
  cfg.data.gen.balance = 0.35;
  cfg.data.gen.noise_pct = 0.05;
  cfg.sim.num_annotators = 3;
  cfg.sim.tau = 0.5;
  cfg.test_fraction = 0.25;
  cfg.perturb.alpha = 0.25;
  cfg.coteach.epochs = 5;
  cfg.coteach.batch_size = 64;
  return cfg;
}

std::string write_temp(const std::string& name, const std::string& body) {
  const auto path = (fs::temp_directory_path() / name).string();
  std::ofstream out(path);
  out << body;
  return path;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "missing file " << path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig config_from_json(const std::string& body) {
  const auto path = write_temp("pipeline_cfg.json", body);
  const ExperimentConfig cfg = load_experiment_config(path);
  fs::remove(path);
  return cfg;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("defaults describe the headline operating point") {
  const ExperimentConfig cfg = default_experiment_config();
  CHECK(cfg.data.generated);
  CHECK(cfg.data.gen.n_samples == 2000);
  CHECK(cfg.data.gen.features_per_family == 5);
  CHECK(cfg.data.gen.balance == 0.31);
  CHECK(cfg.data.gen.noise_pct == 0.1);
  CHECK(cfg.sim.num_annotators == 5);
  CHECK(cfg.sim.tau == 0.2024);
  CHECK(cfg.sim.beta_a == 2.0);
  CHECK(cfg.sim.beta_b == 4.0);
  CHECK(cfg.perturb.alpha == 0.11);
  CHECK(cfg.coteach.epochs == 70);
  CHECK(cfg.coteach.batch_size == 256);
  CHECK(cfg.coteach.lr == 5e-4);
  CHECK(cfg.method == Method::CrowdTeacher);
  REQUIRE(cfg.methods.size() == 4);
  CHECK(cfg.methods[0] == Method::BaseClf);
  CHECK(cfg.methods[3] == Method::CrowdTeacher);
  REQUIRE(cfg.seeds.size() == 10);
  CHECK(cfg.seeds.front() == 1);
  CHECK(cfg.seeds.back() == 10);
  CHECK(cfg.test_fraction == 0.2);
  CHECK(cfg.out_dir == "results");
  CHECK(cfg.jobs == 1);
  CHECK(!cfg.dump_stages);
  CHECK(cfg.reperturb_each_epoch);
  // A raw config keeps the one-shot reading; only the preset opts in.
  CHECK(!ExperimentConfig{}.reperturb_each_epoch);
  for (Method m : {Method::BaseClf, Method::VCoteach, Method::PCoteach,
                   Method::CrowdTeacher}) {
    CHECK(parse_method(method_name(m)) == m);
  }
  CHECK_THROWS(parse_method("boosted_trees"));
}

TEST_CASE("config json covers every section") {
  const ExperimentConfig cfg = config_from_json(R"({
    "data": {
      "source": "generated",
      "features_per_family": 2,
      "n_samples": 400,
      "balance": 0.4,
      "noise_pct": 0.15,
      "poly_degree": 3,
      "param_ranges": {"normal_mu": [-1.0, 1.0], "binomial_n": [3, 9]}
    },
    "sim": {"R": 7, "tau": 0.3, "beta_a": 4.0, "beta_b": 1.5,
            "negative_flip_ratio": 0.02},
    "method": "p_coteach",
    "methods": ["v_coteach", "crowdteacher"],
    "perturb": {"alpha": 0.07, "knn_fraction": 0.02, "mode": "uniform"},
    "coteach": {"teacher_hidden": 12, "student_hidden": 5, "epochs": 33,
                "batch_size": 77, "noise_rate_estimate": 0.25,
                "ramp_epochs": 6, "lr": 0.004, "prediction_mode": "teacher_only"},
    "test_fraction": 0.3,
    "sweep": {"tau": [0.1, 0.6], "alpha": [0.0, 0.11]},
    "seeds": [4, 5, 6],
    "out": "elsewhere",
    "dump_stages": true,
    "reperturb_each_epoch": true,
    "jobs": 3
  })");
  CHECK(cfg.data.generated);
  CHECK(cfg.data.gen.features_per_family == 2);
  CHECK(cfg.data.gen.n_samples == 400);
  CHECK(cfg.data.gen.balance == 0.4);
  CHECK(cfg.data.gen.noise_pct == 0.15);
  CHECK(cfg.data.gen.poly_degree == 3);
  CHECK(cfg.data.gen.param_ranges.normal_mu.lo == -1.0);
  CHECK(cfg.data.gen.param_ranges.normal_mu.hi == 1.0);
  CHECK(cfg.data.gen.param_ranges.binomial_n.lo == 3);
  CHECK(cfg.data.gen.param_ranges.binomial_n.hi == 9);
  CHECK(cfg.data.gen.param_ranges.beta_a.lo == 0.5);  // untouched default
  CHECK(cfg.sim.num_annotators == 7);
  CHECK(cfg.sim.tau == 0.3);
  CHECK(cfg.sim.beta_a == 4.0);
  CHECK(cfg.sim.beta_b == 1.5);
  CHECK(cfg.sim.negative_flip_ratio == 0.02);
  CHECK(cfg.method == Method::PCoteach);
  REQUIRE(cfg.methods.size() == 2);
  CHECK(cfg.methods[0] == Method::VCoteach);
  CHECK(cfg.methods[1] == Method::CrowdTeacher);
  CHECK(cfg.perturb.alpha == 0.07);
  CHECK(cfg.perturb.knn_fraction == 0.02);
  CHECK(cfg.perturb.mode == PerturbMode::Uniform);
  CHECK(cfg.coteach.teacher_hidden == 12);
  CHECK(cfg.coteach.student_hidden == 5);
  CHECK(cfg.coteach.epochs == 33);
  CHECK(cfg.coteach.batch_size == 77);
  REQUIRE(cfg.coteach.noise_rate_estimate.has_value());
  CHECK(*cfg.coteach.noise_rate_estimate == 0.25);
  CHECK(cfg.coteach.ramp_epochs == 6);
  CHECK(cfg.coteach.lr == 0.004);
  CHECK(cfg.coteach.prediction_mode == PredictionMode::TeacherOnly);
  CHECK(cfg.test_fraction == 0.3);
  CHECK(cfg.tau_grid == std::vector<double>{0.1, 0.6});
  CHECK(cfg.alpha_grid == std::vector<double>{0.0, 0.11});
  CHECK(cfg.seeds == std::vector<std::uint64_t>{4, 5, 6});
  CHECK(cfg.out_dir == "elsewhere");
  CHECK(cfg.dump_stages);
  CHECK(cfg.reperturb_each_epoch);
  CHECK(cfg.jobs == 3);

  const ExperimentConfig sentinel = config_from_json(
      R"({"coteach": {"noise_rate_estimate": "from_certainty"}})");
  CHECK(!sentinel.coteach.noise_rate_estimate.has_value());
}

TEST_CASE("config json rejects unknown keys and bad values") {
  CHECK_THROWS(config_from_json(R"({"bogus": 1})"));
  CHECK_THROWS(config_from_json(R"({"data": {"bogus": 1}})"));
  CHECK_THROWS(config_from_json(R"({"data": {"param_ranges": {"bogus": [0,1]}}})"));
  CHECK_THROWS(config_from_json(R"({"data": {"param_ranges": {"normal_mu": [0]}}})"));
  CHECK_THROWS(config_from_json(R"({"data": {"source": "parquet"}})"));
  CHECK_THROWS(config_from_json(R"({"data": {"source": "csv"}})"));  // no csv_path
  CHECK_THROWS(config_from_json(R"({"sim": {"bogus": 1}})"));
  CHECK_THROWS(config_from_json(R"({"method": "boosting"})"));
  CHECK_THROWS(config_from_json(R"({"perturb": {"mode": "gaussian"}})"));
  CHECK_THROWS(config_from_json(R"({"coteach": {"noise_rate_estimate": "guess"}})"));
  CHECK_THROWS(config_from_json(R"({"coteach": {"prediction_mode": "vote"}})"));
  CHECK_THROWS(config_from_json(R"({"sweep": {"gamma": [1]}})"));
  CHECK_THROWS(load_experiment_config("/nonexistent/cfg.json"));
}

TEST_CASE("every method runs end to end deterministically") {
  ExperimentConfig cfg = tiny_config();
  for (Method m : cfg.methods) {
    cfg.method = m;
    const PipelineResult r = run_pipeline(cfg, 3);
    CHECK(r.eval.n_test == 50);
    CHECK(r.eval.auprc > 0.0);
    CHECK(r.eval.auprc <= 1.0);
    CHECK(r.eval.auroc >= 0.0);
    CHECK(r.eval.auroc <= 1.0);
    CHECK(r.eval.positive_prevalence > 0.0);
    CHECK(r.eval.positive_prevalence < 1.0);
    CHECK(r.avg_labels_realized >= 1.0);
    CHECK(r.avg_labels_realized <= 3.0);
    CHECK(r.mean_certainty >= 0.5);
    CHECK(r.mean_certainty <= 1.0);
    CHECK(r.wall_seconds >= 0.0);
  }
  cfg.method = Method::CrowdTeacher;
  const PipelineResult a = run_pipeline(cfg, 3);
  const PipelineResult b = run_pipeline(cfg, 3);
  CHECK(a.eval.auprc == b.eval.auprc);
  CHECK(a.eval.auroc == b.eval.auroc);
  CHECK(a.avg_labels_realized == b.avg_labels_realized);
  CHECK(a.mean_certainty == b.mean_certainty);
}

TEST_CASE("alpha zero collapses the coteach variants onto one result") {
  ExperimentConfig cfg = tiny_config();
  cfg.perturb.alpha = 0.0;
  cfg.method = Method::VCoteach;
  const PipelineResult v = run_pipeline(cfg, 5);
  cfg.method = Method::PCoteach;
  const PipelineResult p = run_pipeline(cfg, 5);
  cfg.method = Method::CrowdTeacher;
  const PipelineResult ct = run_pipeline(cfg, 5);
  CHECK(v.eval.auprc == p.eval.auprc);
  CHECK(v.eval.auprc == ct.eval.auprc);
  CHECK(v.eval.auroc == p.eval.auroc);
  CHECK(v.eval.auroc == ct.eval.auroc);
}

TEST_CASE("upstream stage artifacts never depend on the method") {
  ExperimentConfig cfg = tiny_config();
  cfg.dump_stages = true;
  const auto root = fs::temp_directory_path() / "ct_pipeline_stages";
  fs::remove_all(root);
  for (Method m : cfg.methods) {
    cfg.method = m;
    cfg.out_dir = (root / method_name(m)).string();
    run_pipeline(cfg, 9);
  }
  const auto stage = [&](Method m, const char* file) {
    return (root / method_name(m) / "stages" / file).string();
  };
  for (const char* f : {"data.csv", "data.schema.json", "data_audit.json",
                        "train.csv", "test.csv", "answers.csv", "inference.csv"}) {
    const std::string ref = slurp(stage(Method::BaseClf, f));
    for (Method m : {Method::VCoteach, Method::PCoteach, Method::CrowdTeacher}) {
      CHECK_MESSAGE(slurp(stage(m, f)) == ref, "artifact " << f << " differs");
    }
  }
  // The synthetic pool is method-invariant too; the perturbed view is not.
  CHECK(slurp(stage(Method::PCoteach, "pool.csv")) ==
        slurp(stage(Method::CrowdTeacher, "pool.csv")));
  CHECK(slurp(stage(Method::PCoteach, "perturbed.csv")) !=
        slurp(stage(Method::CrowdTeacher, "perturbed.csv")));
  CHECK(!fs::exists(stage(Method::VCoteach, "pool.csv")));
  CHECK(!fs::exists(stage(Method::VCoteach, "perturbed.csv")));
  CHECK(fs::exists(stage(Method::BaseClf, "network_base.csv")));
  for (Method m : {Method::VCoteach, Method::PCoteach, Method::CrowdTeacher}) {
    CHECK(fs::exists(stage(m, "network_teacher.csv")));
    CHECK(fs::exists(stage(m, "network_student.csv")));
    const std::string trace = slurp(stage(m, "trace.csv"));
    CHECK(std::count(trace.begin(), trace.end(), '\n') == cfg.coteach.epochs + 1);
  }
  fs::remove_all(root);
}

TEST_CASE("sweep rows follow the declared order with seed aggregates") {
  ExperimentConfig cfg = tiny_config();
  cfg.tau_grid = {0.5, 0.3};
  cfg.alpha_grid = {0.11};
  cfg.methods = {Method::BaseClf, Method::CrowdTeacher};
  cfg.seeds = {1, 2};
  const SweepResult res = run_sweep(cfg);
  REQUIRE(res.errors.empty());
  REQUIRE(res.rows.size() == 16);  // 8 cells + 4 groups x {mean, std}
  for (int g = 0; g < 4; ++g) {
    const double tau = g < 2 ? 0.5 : 0.3;
    const std::string want_method = g % 2 == 0 ? "base_clf" : "crowdteacher";
    for (int s = 0; s < 2; ++s) {
      const SweepRow& row = res.rows[static_cast<std::size_t>(2 * g + s)];
      CHECK(row.method == want_method);
      CHECK(row.tau == tau);
      CHECK(row.alpha == 0.11);
      CHECK(row.seed == std::to_string(s + 1));
      CHECK(row.wall_seconds > 0.0);
    }
  }
  for (int g = 0; g < 4; ++g) {
    const SweepRow& a = res.rows[static_cast<std::size_t>(2 * g)];
    const SweepRow& b = res.rows[static_cast<std::size_t>(2 * g + 1)];
    const SweepRow& mean = res.rows[static_cast<std::size_t>(8 + 2 * g)];
    const SweepRow& sd = res.rows[static_cast<std::size_t>(8 + 2 * g + 1)];
    CHECK(mean.seed == "mean");
    CHECK(sd.seed == "std");
    CHECK(mean.method == a.method);
    CHECK(mean.tau == a.tau);
    CHECK(mean.alpha == a.alpha);
    const double m_auprc = (a.auprc + b.auprc) / 2.0;
    CHECK(mean.auprc == doctest::Approx(m_auprc).epsilon(1e-12));
    const double s_auprc = std::sqrt((a.auprc - m_auprc) * (a.auprc - m_auprc) +
                                     (b.auprc - m_auprc) * (b.auprc - m_auprc));
    CHECK(sd.auprc == doctest::Approx(s_auprc).epsilon(1e-12));
    const double m_labels = (a.avg_labels + b.avg_labels) / 2.0;
    CHECK(mean.avg_labels == doctest::Approx(m_labels).epsilon(1e-12));
  }
}

TEST_CASE("sweep output is byte-stable across reruns and worker counts") {
  ExperimentConfig cfg = tiny_config();
  cfg.alpha_grid = {0.0, 0.11};
  cfg.methods = {Method::CrowdTeacher};
  cfg.seeds = {1, 2};
  const auto path_a = (fs::temp_directory_path() / "sweep_a.csv").string();
  const auto path_b = (fs::temp_directory_path() / "sweep_b.csv").string();
  write_sweep_csv(run_sweep(cfg), path_a);
  cfg.jobs = 2;
  write_sweep_csv(run_sweep(cfg), path_b);
  const std::string a = slurp(path_a);
  CHECK(a == slurp(path_b));
  CHECK(a.rfind("method,tau,avg_labels_realized,alpha,seed,auprc,auroc\n", 0) == 0);
  // 4 cells + 2 groups x {mean, std} + header.
  CHECK(std::count(a.begin(), a.end(), '\n') == 9);

  const auto timing = (fs::temp_directory_path() / "sweep_t.csv").string();
  cfg.jobs = 1;
  write_timing_csv(run_sweep(cfg), timing);
  const std::string t = slurp(timing);
  CHECK(t.rfind("method,tau,alpha,seed,wall_seconds\n", 0) == 0);
  CHECK(std::count(t.begin(), t.end(), '\n') == 5);  // aggregates are skipped
  fs::remove(path_a);
  fs::remove(path_b);
  fs::remove(timing);
}

TEST_CASE("sweep collects per-cell errors instead of aborting") {
  ExperimentConfig cfg = tiny_config();
  cfg.data.generated = false;
  cfg.data.csv_path = "/nonexistent/data.csv";
  cfg.methods = {Method::CrowdTeacher};
  cfg.seeds = {1, 2};
  const SweepResult res = run_sweep(cfg);
  CHECK(res.rows.empty());
  REQUIRE(res.errors.size() == 2);
  for (const auto& e : res.errors) {
    CHECK(e.find("stage data:") != std::string::npos);
    CHECK(e.find("cell crowdteacher_tau") != std::string::npos);
  }
  cfg.seeds.clear();
  CHECK_THROWS(run_sweep(cfg));
}

TEST_CASE("csv data sources flow through the pipeline") {
  const ExperimentConfig gen_cfg = tiny_config();
  DataGenConfig g = gen_cfg.data.gen;
  g.seed = 21;
  const GeneratedData made = generate(g);
  const auto csv = (fs::temp_directory_path() / "ct_source.csv").string();
  const auto schema = (fs::temp_directory_path() / "ct_source.schema.json").string();
  save_csv(made.data, csv);
  save_schema_json(made.data.schema, schema);

  ExperimentConfig cfg = tiny_config();
  cfg.data.generated = false;
  cfg.data.csv_path = csv;
  cfg.data.csv_schema = load_schema_json(schema);
  cfg.method = Method::CrowdTeacher;
  const PipelineResult r = run_pipeline(cfg, 4);
  CHECK(r.eval.n_test == 50);
  CHECK(r.eval.auprc > 0.0);
  // Same bytes in, same result out.
  const PipelineResult r2 = run_pipeline(cfg, 4);
  CHECK(r.eval.auprc == r2.eval.auprc);
  fs::remove(csv);
  fs::remove(schema);
}

TEST_CASE("schema json round trips") {
  FeatureSchema schema;
  schema.columns.push_back({"height", ColumnKind::Continuous, {}});
  schema.columns.push_back({"color", ColumnKind::Discrete, {"red", "green", "blue"}});
  const auto path = (fs::temp_directory_path() / "ct_schema.json").string();
  save_schema_json(schema, path);
  const FeatureSchema back = load_schema_json(path);
  REQUIRE(back.columns.size() == 2);
  CHECK(back.columns[0].name == "height");
  CHECK(back.columns[0].kind == ColumnKind::Continuous);
  CHECK(back.columns[0].vocabulary.empty());
  CHECK(back.columns[1].name == "color");
  CHECK(back.columns[1].kind == ColumnKind::Discrete);
  CHECK(back.columns[1].vocabulary == std::vector<std::string>{"red", "green", "blue"});
  fs::remove(path);
}

}
