#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "crowdteacher/annotation.hpp"
#include "crowdteacher/coteaching.hpp"
#include "crowdteacher/datagen.hpp"
#include "crowdteacher/metrics.hpp"
#include "crowdteacher/perturbation.hpp"
#include "crowdteacher/tabular.hpp"

namespace crowdteacher {

enum class Method { BaseClf, VCoteach, PCoteach, CrowdTeacher };

const char* method_name(Method m);
Method parse_method(const std::string& name);

struct DataSource {
  bool generated = true;
  DataGenConfig gen;         // used when generated
  std::string csv_path;      // used when loading
  FeatureSchema csv_schema;  // used when loading
};

struct ExperimentConfig {
  DataSource data;
  SimConfig sim;
  Method method = Method::CrowdTeacher;  // run_pipeline target
  std::vector<Method> methods;           // run_sweep targets; empty falls back to method
  PerturbConfig perturb;
  CoteachConfig coteach;
  double test_fraction = 0.2;
  std::vector<double> tau_grid;    // sweep axis; empty keeps sim.tau fixed
  std::vector<double> alpha_grid;  // sweep axis; empty keeps perturb.alpha fixed
  std::vector<std::uint64_t> seeds;
  std::string out_dir = "results";
  bool dump_stages = false;
  bool reperturb_each_epoch = false;  // redraw the perturbation every epoch
  int jobs = 1;
};

// Headline operating point: N=2000 at balance 0.31 with 10% label noise,
// R=5, tau=0.2024 (about 2.34 labels per sample), alpha=0.11, seeds 1..10.
ExperimentConfig default_experiment_config();
ExperimentConfig load_experiment_config(const std::string& path);

struct PipelineResult {
  EvalResult eval;
  double avg_labels_realized = 0.0;
  double mean_certainty = 0.0;
  double wall_seconds = 0.0;
};

// generate/load -> split -> annotate train -> infer -> (perturb) -> train ->
// evaluate against clean test labels. Stage failures rethrow with the stage
// name prefixed. All stage seeds derive from `seed`, never from the method,
// so upstream artifacts are shared across methods.
PipelineResult run_pipeline(const ExperimentConfig& cfg, std::uint64_t seed);

struct SweepRow {
  std::string method;
  double tau = 0.0;
  double avg_labels = 0.0;
  double alpha = 0.0;
  std::string seed;  // cell seed, or "mean"/"std" on aggregate rows
  double auprc = 0.0;
  double auroc = 0.0;
  double wall_seconds = 0.0;  // written to the timing sidecar only
};

struct SweepResult {
  std::vector<SweepRow> rows;       // cell rows in grid order, then aggregates
  std::vector<std::string> errors;  // one entry per failed cell
};

// Cartesian product tau x alpha x method x seed, cells independent and run
// in grid order (optionally on cfg.jobs threads); failed cells are recorded
// and skipped. Aggregate mean/std rows are appended per (tau, alpha, method).
SweepResult run_sweep(const ExperimentConfig& cfg);

// Deterministic result table: method,tau,avg_labels_realized,alpha,seed,
// auprc,auroc. Wall times go to the sidecar so reruns stay byte-identical.
void write_sweep_csv(const SweepResult& r, const std::string& path);
void write_timing_csv(const SweepResult& r, const std::string& path);

// Schema sidecar for dumped dataset CSVs, so standalone CLI subcommands can
// reload them without a config file.
void save_schema_json(const FeatureSchema& schema, const std::string& path);
FeatureSchema load_schema_json(const std::string& path);

}  // namespace crowdteacher
