#include "crowdteacher/coteaching.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "crowdteacher/rng.hpp"

namespace crowdteacher {

namespace {

constexpr std::uint64_t kTeacherInitStream = 1;
constexpr std::uint64_t kStudentInitStream = 2;
constexpr std::uint64_t kShuffleStreamBase = 1000;

void check_labels(std::span<const int> labels, int n, int num_classes) {
  if (static_cast<int>(labels.size()) != n) {
    throw std::invalid_argument("label count does not match dataset rows");
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw std::invalid_argument("label outside [0,K)");
  }
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& x, std::span<const int> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t b = 0; b < rows.size(); ++b) {
    out.row(static_cast<Eigen::Index>(b)) = x.row(rows[b]);
  }
  return out;
}

std::vector<int> gather_labels(std::span<const int> labels, std::span<const int> rows) {
  std::vector<int> out(rows.size());
  for (std::size_t b = 0; b < rows.size(); ++b) {
    out[b] = labels[static_cast<std::size_t>(rows[b])];
  }
  return out;
}

double mean_at(const Eigen::VectorXd& v, const std::vector<int>& idx) {
  double s = 0.0;
  for (int i : idx) s += v(i);
  return s / static_cast<double>(idx.size());
}

double agreement_rate(const Network& a, const Network& b, const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd pa = forward(a, x);
  const Eigen::MatrixXd pb = forward(b, x);
  int same = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index ka, kb;
    pa.row(i).maxCoeff(&ka);
    pb.row(i).maxCoeff(&kb);
    if (ka == kb) ++same;
  }
  return static_cast<double>(same) / static_cast<double>(x.rows());
}

}  // namespace

int default_teacher_hidden(int num_raw_columns) {
  return std::max(2, (num_raw_columns + 1) / 2);
}

int default_base_hidden(int num_raw_columns) {
  return std::max(2, (num_raw_columns + 3) / 4);
}

double keep_rate(int epoch, double epsilon, int ramp_epochs) {
  if (epoch < 0) throw std::invalid_argument("epoch must be >= 0");
  if (ramp_epochs < 1) throw std::invalid_argument("ramp_epochs must be >= 1");
  if (!(epsilon >= 0.0 && epsilon < 1.0)) {
    throw std::invalid_argument("noise-rate estimate must lie in [0,1)");
  }
  const double ramp = std::min(static_cast<double>(epoch) / ramp_epochs, 1.0);
  return 1.0 - epsilon * ramp;
}

double keep_rate(int epoch, const CoteachConfig& cfg) {
  if (!cfg.noise_rate_estimate) {
    throw std::invalid_argument("keep_rate needs a resolved noise-rate estimate");
  }
  return keep_rate(epoch, *cfg.noise_rate_estimate, cfg.ramp_epochs);
}

std::vector<int> select_small_loss(const Eigen::VectorXd& losses, double rate) {
  const int n = static_cast<int>(losses.size());
  if (n == 0) throw std::invalid_argument("empty batch");
  if (!(rate > 0.0 && rate <= 1.0)) throw std::invalid_argument("rate must lie in (0,1]");
  const int keep = std::min(n, static_cast<int>(std::ceil(rate * n)));
  std::vector<std::pair<double, int>> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = {losses(i), i};
  std::partial_sort(order.begin(), order.begin() + keep, order.end());
  std::vector<int> out(static_cast<std::size_t>(keep));
  for (int i = 0; i < keep; ++i) out[static_cast<std::size_t>(i)] = order[static_cast<std::size_t>(i)].second;
  std::sort(out.begin(), out.end());
  return out;
}

TrainedPair train_coteaching(const Dataset& d, std::span<const int> labels,
                             const CoteachConfig& cfg,
                             const Eigen::VectorXd* certainty,
                             const BatchHook& hook,
                             const EpochDataProvider& provider) {
  const int n = d.num_rows();
  const int k_classes = d.num_classes;
  check_labels(labels, n, k_classes);
  if (cfg.epochs < 0 || cfg.batch_size < 1) {
    throw std::invalid_argument("bad epoch or batch size");
  }

  double epsilon;
  if (cfg.noise_rate_estimate) {
    epsilon = *cfg.noise_rate_estimate;
  } else {
    if (!certainty || certainty->size() != n) {
      throw std::invalid_argument("noise-rate estimate unset and no certainty given");
    }
    epsilon = 1.0 - certainty->mean();
  }
  if (!(epsilon >= 0.0 && epsilon < 1.0)) {
    throw std::invalid_argument("resolved noise-rate estimate outside [0,1)");
  }

  const int raw_cols = d.schema.num_columns();
  const int teacher_hidden =
      cfg.teacher_hidden > 0 ? cfg.teacher_hidden : default_teacher_hidden(raw_cols);
  const int student_hidden = cfg.student_hidden > 0
                                 ? cfg.student_hidden
                                 : std::max(2, (teacher_hidden + 1) / 2);

  TrainedPair pair;
  pair.encoder = fit_encoder(d);
  pair.epsilon = epsilon;
  const int in_dim = pair.encoder.encoded_dim();
  pair.teacher = init_network(
      {in_dim, teacher_hidden, k_classes, derive_seed(cfg.seed, kTeacherInitStream)});
  pair.student = init_network(
      {in_dim, student_hidden, k_classes, derive_seed(cfg.seed, kStudentInitStream)});

  Eigen::MatrixXd x = pair.encoder.encode(d.features);
  OptimizerState opt_t = make_optimizer(pair.teacher, cfg.lr);
  OptimizerState opt_s = make_optimizer(pair.student, cfg.lr);

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (provider) {
      const Dataset de = provider(epoch);
      if (!de.schema.same_layout(d.schema) || de.num_rows() != n) {
        throw std::invalid_argument("epoch data provider changed the data layout");
      }
      x = pair.encoder.encode(de.features);
    }
    auto rng = make_rng(derive_seed(cfg.seed, kShuffleStreamBase + static_cast<std::uint64_t>(epoch)));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    const double rate = keep_rate(epoch, epsilon, cfg.ramp_epochs);
    double loss_sum_t = 0.0;
    double loss_sum_s = 0.0;
    int batch_count = 0;

    for (int start = 0; start < n; start += cfg.batch_size) {
      const int b = std::min(cfg.batch_size, n - start);
      const std::span<const int> rows(order.data() + start, static_cast<std::size_t>(b));
      const Eigen::MatrixXd batch = gather_rows(x, rows);
      const std::vector<int> batch_labels = gather_labels(labels, rows);

      const Eigen::VectorXd loss_t =
          per_sample_loss(forward(pair.teacher, batch), batch_labels);
      const Eigen::VectorXd loss_s =
          per_sample_loss(forward(pair.student, batch), batch_labels);
      const std::vector<int> sel_t = select_small_loss(loss_t, rate);
      const std::vector<int> sel_s = select_small_loss(loss_s, rate);

      if (hook) {
        hook(BatchEvent{epoch, batch_count, rate, rows, sel_t, sel_s});
      }

      // Cross update: each net learns from the other's clean picks.
      step(pair.teacher, opt_t, backward(pair.teacher, batch, batch_labels, sel_s));
      step(pair.student, opt_s, backward(pair.student, batch, batch_labels, sel_t));

      loss_sum_t += mean_at(loss_t, sel_t);
      loss_sum_s += mean_at(loss_s, sel_s);
      ++batch_count;
    }

    pair.trace.push_back({rate, loss_sum_t / batch_count, loss_sum_s / batch_count,
                          agreement_rate(pair.teacher, pair.student, x)});
  }
  return pair;
}

TrainedModel train_base(const Dataset& d, std::span<const int> labels,
                        const MlpSpec& spec, int epochs, int batch_size, double lr,
                        std::uint64_t seed) {
  const int n = d.num_rows();
  check_labels(labels, n, d.num_classes);
  if (epochs < 0 || batch_size < 1) throw std::invalid_argument("bad epoch or batch size");

  TrainedModel model;
  model.encoder = fit_encoder(d);
  MlpSpec resolved = spec;
  resolved.input_dim = model.encoder.encoded_dim();
  if (resolved.output_dim == 0) resolved.output_dim = d.num_classes;
  model.net = init_network(resolved);

  const Eigen::MatrixXd x = model.encoder.encode(d.features);
  OptimizerState opt = make_optimizer(model.net, lr);

  std::vector<int> order(static_cast<std::size_t>(n));
  std::vector<int> all;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    auto rng = make_rng(derive_seed(seed, kShuffleStreamBase + static_cast<std::uint64_t>(epoch)));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start < n; start += batch_size) {
      const int b = std::min(batch_size, n - start);
      const std::span<const int> rows(order.data() + start, static_cast<std::size_t>(b));
      const Eigen::MatrixXd batch = gather_rows(x, rows);
      const std::vector<int> batch_labels = gather_labels(labels, rows);
      all.resize(static_cast<std::size_t>(b));
      std::iota(all.begin(), all.end(), 0);
      step(model.net, opt, backward(model.net, batch, batch_labels, all));
    }
  }
  return model;
}

Eigen::MatrixXd predict(const TrainedPair& pair, const Dataset& d,
                        PredictionMode mode) {
  const Eigen::MatrixXd x = pair.encoder.encode(d.features);
  if (mode == PredictionMode::TeacherOnly) return forward(pair.teacher, x);
  return 0.5 * (forward(pair.teacher, x) + forward(pair.student, x));
}

Eigen::MatrixXd predict(const TrainedModel& model, const Dataset& d) {
  return forward(model.net, model.encoder.encode(d.features));
}

void save_trace_csv(const std::vector<EpochStats>& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << "epoch,keep_rate,teacher_selected_loss,student_selected_loss,agreement\n";
  for (std::size_t e = 0; e < trace.size(); ++e) {
    out << e << ',' << format_double(trace[e].keep_rate) << ','
        << format_double(trace[e].teacher_selected_loss) << ','
        << format_double(trace[e].student_selected_loss) << ','
        << format_double(trace[e].agreement) << '\n';
  }
}

}  // namespace crowdteacher
