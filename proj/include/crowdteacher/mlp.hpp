#pragma once

#include <cstdint>
#include <span>
#include <string>

#include <Eigen/Core>

#include "crowdteacher/tabular.hpp"

namespace crowdteacher {

struct MlpSpec {
  int input_dim = 0;     // width after encoding
  int hidden_units = 0;  // single ReLU hidden layer
  int output_dim = 0;    // class count
  std::uint64_t seed = 0;
};

// Two affine layers around one ReLU hidden layer.
struct Network {
  Eigen::MatrixXd w1;  // input_dim x hidden
  Eigen::VectorXd b1;  // hidden
  Eigen::MatrixXd w2;  // hidden x output
  Eigen::VectorXd b2;  // output

  int input_dim() const { return static_cast<int>(w1.rows()); }
  int hidden_units() const { return static_cast<int>(w1.cols()); }
  int output_dim() const { return static_cast<int>(w2.cols()); }
  void check_finite() const;  // throws on any NaN or infinity
};

struct Gradients {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;
  Eigen::VectorXd b2;
};

// Adaptive moment estimation with bias correction.
struct OptimizerState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int step_count = 0;
  Gradients m;  // first moments
  Gradients v;  // second moments
};

// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
Network init_network(const MlpSpec& spec);

struct ForwardCache {
  Eigen::MatrixXd hidden_pre;  // B x H
  Eigen::MatrixXd hidden;      // B x H after ReLU
  Eigen::MatrixXd probs;       // B x K softmax rows
};

// Softmax rows computed with max subtraction.
Eigen::MatrixXd forward(const Network& net, const Eigen::MatrixXd& batch);
ForwardCache forward_cached(const Network& net, const Eigen::MatrixXd& batch);

// loss_b = -log(probs(b, label_b) + 1e-12).
Eigen::VectorXd per_sample_loss(const Eigen::MatrixXd& probs,
                                std::span<const int> labels);

// Gradients of the mean cross-entropy over the selected batch rows only.
Gradients backward(const Network& net, const Eigen::MatrixXd& batch,
                   std::span<const int> labels, std::span<const int> selected);

OptimizerState make_optimizer(const Network& net, double lr);
void step(Network& net, OptimizerState& opt, const Gradients& g);

// Network boundary encoding: continuous columns standardized with scales
// fitted on the training split, discrete columns one-hot over the vocabulary,
// blocks laid out in schema column order.
struct FeatureEncoder {
  Standardizer scaler;

  int encoded_dim() const;
  Eigen::MatrixXd encode(const Eigen::MatrixXd& features) const;
};

FeatureEncoder fit_encoder(const Dataset& train);

// Flat text round trip: one shape header line, then one parameter per line.
void save_network_csv(const Network& net, const std::string& path);
Network load_network_csv(const std::string& path);

}  // namespace crowdteacher
