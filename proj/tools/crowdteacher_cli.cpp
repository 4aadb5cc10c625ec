// Experiment CLI: each pipeline stage is a standalone subcommand over dumped
// artifacts, plus `sweep` for the full grid.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>

#include "crowdteacher/annotation.hpp"
#include "crowdteacher/copula.hpp"
#include "crowdteacher/coteaching.hpp"
#include "crowdteacher/datagen.hpp"
#include "crowdteacher/metrics.hpp"
#include "crowdteacher/perturbation.hpp"
#include "crowdteacher/pipeline.hpp"
#include "crowdteacher/rng.hpp"
#include "crowdteacher/tabular.hpp"
#include "crowdteacher/truth_inference.hpp"

namespace {

using namespace crowdteacher;

// Stage stream tags mirror run_pipeline, so standalone subcommand chains
// reproduce in-process sweeps bit for bit.
constexpr std::uint64_t kDataStream = 10;
constexpr std::uint64_t kSimStream = 12;
constexpr std::uint64_t kPoolStream = 13;
constexpr std::uint64_t kTrainStream = 14;
constexpr std::uint64_t kPerturbStream = 15;

struct GlobalOpts {
  std::string config_path;
  std::uint64_t seed = 1;
  std::string out_dir;
  bool dump_stages = false;
  int jobs = 0;
};

ExperimentConfig resolve_config(const GlobalOpts& g) {
  ExperimentConfig cfg = g.config_path.empty() ? default_experiment_config()
                                               : load_experiment_config(g.config_path);
  if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
  if (g.dump_stages) cfg.dump_stages = true;
  if (g.jobs > 0) cfg.jobs = g.jobs;
  return cfg;
}

Dataset load_dataset(const std::string& csv_path) {
  return load_csv(csv_path, load_schema_json(csv_path + ".schema.json"));
}

void save_dataset(const Dataset& d, const std::string& csv_path) {
  save_csv(d, csv_path);
  save_schema_json(d.schema, csv_path + ".schema.json");
}

// P columns and the trailing certainty column of a dumped inference CSV.
InferenceResult load_inference(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open inference file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty inference file: " + path);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      const std::size_t comma = line.find(',', pos);
      const std::string cell =
          line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      row.push_back(std::stod(cell));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty() || rows.front().size() < 3) {
    throw std::runtime_error("malformed inference file: " + path);
  }
  const int n = static_cast<int>(rows.size());
  const int k = static_cast<int>(rows.front().size()) - 1;
  InferenceResult inf;
  inf.P.resize(n, k);
  inf.certainty.resize(n);
  inf.hard_labels.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < k; ++c) inf.P(i, c) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
    inf.certainty(i) = rows[static_cast<std::size_t>(i)].back();
    Eigen::Index best;
    inf.P.row(i).maxCoeff(&best);
    inf.hard_labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return inf;
}

void save_scores(const std::vector<double>& scores, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << "score\n";
  for (double s : scores) out << format_double(s) << '\n';
}

std::vector<double> load_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scores file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty scores file: " + path);
  std::vector<double> scores;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) scores.push_back(std::stod(line));
  }
  return scores;
}

void print_eval(const EvalResult& e) {
  std::cout << "auprc=" << format_double(e.auprc) << " auroc=" << format_double(e.auroc)
            << " n_test=" << e.n_test
            << " positive_prevalence=" << format_double(e.positive_prevalence) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crowdteacher: crowdsourced-label training experiments"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "experiment config JSON");
  app.add_option("--seed", g.seed, "master seed (default 1)");
  app.add_option("--out", g.out_dir, "output directory (overrides config)");
  app.add_flag("--dump-stages", g.dump_stages, "write every intermediate artifact");
  app.add_option("--jobs", g.jobs, "parallel sweep cells (overrides config)");

  auto* cmd_gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  auto* cmd_sim = app.add_subcommand("simulate", "simulate crowd annotations");
  auto* cmd_infer = app.add_subcommand("infer", "run truth inference on answers");
  auto* cmd_synth = app.add_subcommand("synth", "fit the copula and draw a pool");
  auto* cmd_perturb = app.add_subcommand("perturb", "perturb a training set");
  auto* cmd_train = app.add_subcommand("train", "train the configured method");
  auto* cmd_eval = app.add_subcommand("eval", "score a dumped prediction file");
  auto* cmd_sweep = app.add_subcommand("sweep", "run the full experiment grid");

  std::string data_path, answers_path, inference_path, pool_path, scores_path;
  int num_classes = 2;
  int pool_n = 0;
  cmd_sim->add_option("--data", data_path, "dataset CSV (with noisy labels)")->required();
  cmd_infer->add_option("--answers", answers_path, "answer-matrix CSV")->required();
  cmd_infer->add_option("--classes", num_classes, "class count (default 2)");
  cmd_synth->add_option("--data", data_path, "training CSV to fit on")->required();
  cmd_synth->add_option("--n", pool_n, "pool size (default: training size)");
  cmd_perturb->add_option("--data", data_path, "training CSV")->required();
  cmd_perturb->add_option("--pool", pool_path, "synthetic pool CSV")->required();
  cmd_perturb->add_option("--inference", inference_path, "inference CSV (certainty source)")->required();
  cmd_train->add_option("--data", data_path, "training CSV")->required();
  cmd_train->add_option("--inference", inference_path, "inference CSV (labels + certainty)")->required();
  std::string eval_data_path;
  cmd_train->add_option("--eval-data", eval_data_path, "optional test CSV to score");
  cmd_eval->add_option("--scores", scores_path, "score CSV from train")->required();
  cmd_eval->add_option("--data", data_path, "test CSV with clean labels")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const ExperimentConfig cfg = resolve_config(g);
    std::filesystem::create_directories(cfg.out_dir);

    if (cmd_gen->parsed()) {
      DataGenConfig gc = cfg.data.gen;
      gc.seed = derive_seed(g.seed, kDataStream);
      const GeneratedData gen = generate(gc);
      save_dataset(gen.data, cfg.out_dir + "/data.csv");
      save_audit_json(gen.audit, cfg.out_dir + "/data_audit.json");
      std::cout << "wrote " << cfg.out_dir << "/data.csv (" << gen.data.num_rows()
                << " rows, " << gen.data.num_features() << " features)\n";
    } else if (cmd_sim->parsed()) {
      const Dataset d = load_dataset(data_path);
      SimConfig sim = cfg.sim;
      sim.seed = derive_seed(g.seed, kSimStream);
      const SimResult res = simulate_annotations(d, sim);
      save_answers_csv(res.answers, cfg.out_dir + "/answers.csv");
      std::cout << "wrote " << cfg.out_dir << "/answers.csv (avg labels "
                << format_double(average_labels_per_sample(res.answers)) << ")\n";
    } else if (cmd_infer->parsed()) {
      const AnswerMatrix a = load_answers_csv(answers_path, num_classes);
      const InferenceResult inf = dawid_skene(a, num_classes, 100, 1e-6);
      save_inference_csv(inf, cfg.out_dir + "/inference.csv");
      std::cout << "wrote " << cfg.out_dir << "/inference.csv (iterations "
                << inf.iterations << ", converged " << (inf.converged ? "yes" : "no")
                << ")\n";
    } else if (cmd_synth->parsed()) {
      const Dataset d = load_dataset(data_path);
      const CopulaModel model = fit_copula(d);
      const int n = pool_n > 0 ? pool_n : d.num_rows();
      const SyntheticPool pool = sample_copula(model, n, derive_seed(g.seed, kPoolStream));
      save_dataset(pool, cfg.out_dir + "/pool.csv");
      std::cout << "wrote " << cfg.out_dir << "/pool.csv (" << n << " rows)\n";
    } else if (cmd_perturb->parsed()) {
      const Dataset d = load_dataset(data_path);
      const Dataset pool = load_dataset(pool_path);
      const InferenceResult inf = load_inference(inference_path);
      PerturbConfig p = cfg.perturb;
      p.mode = cfg.method == Method::PCoteach ? PerturbMode::Uniform
                                              : PerturbMode::CertaintyWeighted;
      p.seed = derive_seed(g.seed, kPerturbStream);
      const Dataset perturbed = perturb_dataset(d, pool, inf.certainty, p);
      save_dataset(perturbed, cfg.out_dir + "/perturbed.csv");
      std::cout << "wrote " << cfg.out_dir << "/perturbed.csv\n";
    } else if (cmd_train->parsed()) {
      const Dataset d = load_dataset(data_path);
      const InferenceResult inf = load_inference(inference_path);
      const std::uint64_t train_seed = derive_seed(g.seed, kTrainStream);
      std::vector<double> scores;
      if (cfg.method == Method::BaseClf) {
        MlpSpec spec;
        spec.hidden_units = default_base_hidden(d.schema.num_columns());
        spec.output_dim = d.num_classes;
        spec.seed = derive_seed(train_seed, 1);
        const TrainedModel model =
            train_base(d, inf.hard_labels, spec, cfg.coteach.epochs,
                       cfg.coteach.batch_size, cfg.coteach.lr, train_seed);
        save_network_csv(model.net, cfg.out_dir + "/network_base.csv");
        if (!eval_data_path.empty()) {
          const Dataset test = load_dataset(eval_data_path);
          const Eigen::MatrixXd probs = predict(model, test);
          scores.resize(static_cast<std::size_t>(test.num_rows()));
          for (int i = 0; i < test.num_rows(); ++i) scores[static_cast<std::size_t>(i)] = probs(i, 1);
        }
      } else {
        CoteachConfig c = cfg.coteach;
        c.seed = train_seed;
        const TrainedPair pair =
            train_coteaching(d, inf.hard_labels, c, &inf.certainty);
        save_network_csv(pair.teacher, cfg.out_dir + "/network_teacher.csv");
        save_network_csv(pair.student, cfg.out_dir + "/network_student.csv");
        save_trace_csv(pair.trace, cfg.out_dir + "/trace.csv");
        if (!eval_data_path.empty()) {
          const Dataset test = load_dataset(eval_data_path);
          const Eigen::MatrixXd probs = predict(pair, test, cfg.coteach.prediction_mode);
          scores.resize(static_cast<std::size_t>(test.num_rows()));
          for (int i = 0; i < test.num_rows(); ++i) scores[static_cast<std::size_t>(i)] = probs(i, 1);
        }
      }
      std::cout << "trained " << method_name(cfg.method) << " -> " << cfg.out_dir << '\n';
      if (!scores.empty()) {
        save_scores(scores, cfg.out_dir + "/scores.csv");
        const Dataset test = load_dataset(eval_data_path);
        if (test.clean_labels) {
          print_eval(evaluate_scores(scores, *test.clean_labels));
        }
      }
    } else if (cmd_eval->parsed()) {
      const std::vector<double> scores = load_scores(scores_path);
      const Dataset test = load_dataset(data_path);
      if (!test.clean_labels) throw std::runtime_error("test CSV has no clean labels");
      print_eval(evaluate_scores(scores, *test.clean_labels));
    } else if (cmd_sweep->parsed()) {
      const SweepResult res = run_sweep(cfg);
      write_sweep_csv(res, cfg.out_dir + "/results.csv");
      write_timing_csv(res, cfg.out_dir + "/results_timing.csv");
      if (!res.errors.empty()) {
        std::ofstream log(cfg.out_dir + "/results_errors.log");
        for (const auto& e : res.errors) log << e << '\n';
        for (const auto& e : res.errors) std::cerr << e << '\n';
      }
      std::cout << "wrote " << cfg.out_dir << "/results.csv (" << res.rows.size()
                << " rows, " << res.errors.size() << " failed cells)\n";
      return res.errors.empty() ? 0 : 1;
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
