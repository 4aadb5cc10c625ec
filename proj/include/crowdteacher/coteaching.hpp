#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "crowdteacher/mlp.hpp"
#include "crowdteacher/tabular.hpp"

namespace crowdteacher {

enum class PredictionMode { AverageBoth, TeacherOnly };

struct CoteachConfig {
  int teacher_hidden = 0;   // 0 derives ceil(M/2) from the raw column count, min 2
  int student_hidden = 0;   // 0 derives ceil(teacher/2), min 2
  int epochs = 100;
  int batch_size = 128;
  // Noise-rate estimate epsilon in [0,1). Unset means "from certainty":
  // epsilon = 1 - mean certainty, so sparser annotation keeps fewer samples.
  std::optional<double> noise_rate_estimate;
  int ramp_epochs = 10;  // T_k: epochs to ramp from keeping all to the floor
  double lr = 1e-3;
  PredictionMode prediction_mode = PredictionMode::AverageBoth;
  std::uint64_t seed = 0;
};

struct EpochStats {
  double keep_rate = 1.0;
  double teacher_selected_loss = 0.0;  // mean over the teacher's own picks
  double student_selected_loss = 0.0;
  double agreement = 0.0;  // share of rows where hard predictions coincide
};

struct TrainedPair {
  Network teacher;
  Network student;
  FeatureEncoder encoder;
  double epsilon = 0.0;  // resolved noise-rate estimate
  std::vector<EpochStats> trace;
};

struct TrainedModel {
  Network net;
  FeatureEncoder encoder;
};

// Per-batch instrumentation record. Selections index into the batch.
struct BatchEvent {
  int epoch = 0;
  int batch_index = 0;
  double rate = 1.0;
  std::span<const int> batch_rows;
  std::span<const int> teacher_selected;
  std::span<const int> student_selected;
};
using BatchHook = std::function<void(const BatchEvent&)>;

// Optional replacement training features per epoch (same schema as the
// original dataset); the encoder stays fitted on the epoch-0 data.
using EpochDataProvider = std::function<Dataset(int epoch)>;

// R(T) = 1 - epsilon * min(T / T_k, 1).
double keep_rate(int epoch, double epsilon, int ramp_epochs);
double keep_rate(int epoch, const CoteachConfig& cfg);

// Indices of the ceil(rate * B) smallest losses, ascending; loss ties break
// toward the lower index.
std::vector<int> select_small_loss(const Eigen::VectorXd& losses, double rate);

// Dual training with cross-updates: each net steps on the other's small-loss
// selection. Both nets share the per-epoch shuffle but start from different
// initializations. `certainty` is required when cfg leaves the noise-rate
// estimate unset.
TrainedPair train_coteaching(const Dataset& d, std::span<const int> labels,
                             const CoteachConfig& cfg,
                             const Eigen::VectorXd* certainty = nullptr,
                             const BatchHook& hook = nullptr,
                             const EpochDataProvider& provider = nullptr);

// Single network, every sample participates in every batch.
TrainedModel train_base(const Dataset& d, std::span<const int> labels,
                        const MlpSpec& spec, int epochs, int batch_size,
                        double lr, std::uint64_t seed);

Eigen::MatrixXd predict(const TrainedPair& pair, const Dataset& d,
                        PredictionMode mode);
Eigen::MatrixXd predict(const TrainedModel& model, const Dataset& d);

void save_trace_csv(const std::vector<EpochStats>& trace, const std::string& path);

// Hidden-width defaults from the raw (pre-encoding) column count M.
int default_teacher_hidden(int num_raw_columns);  // ceil(M/2), min 2
int default_base_hidden(int num_raw_columns);     // ceil(M/4), min 2

}  // namespace crowdteacher
