#include "crowdteacher/mlp.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "crowdteacher/rng.hpp"

namespace crowdteacher {

namespace {

void check_finite_or_throw(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw std::runtime_error(std::string("non-finite ") + what);
}

Gradients zeros_like(const Network& net) {
  Gradients g;
  g.w1 = Eigen::MatrixXd::Zero(net.w1.rows(), net.w1.cols());
  g.b1 = Eigen::VectorXd::Zero(net.b1.size());
  g.w2 = Eigen::MatrixXd::Zero(net.w2.rows(), net.w2.cols());
  g.b2 = Eigen::VectorXd::Zero(net.b2.size());
  return g;
}

void adam_update(Eigen::Ref<Eigen::MatrixXd> p, Eigen::Ref<Eigen::MatrixXd> m,
                 Eigen::Ref<Eigen::MatrixXd> v, const Eigen::MatrixXd& g,
                 const OptimizerState& opt, double bc1, double bc2) {
  m = opt.beta1 * m + (1.0 - opt.beta1) * g;
  v = opt.beta2 * v + (1.0 - opt.beta2) * g.cwiseProduct(g);
  p.array() -= opt.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + opt.eps);
}

}  // namespace

void Network::check_finite() const {
  check_finite_or_throw(w1, "first-layer weights");
  check_finite_or_throw(b1, "first-layer biases");
  check_finite_or_throw(w2, "second-layer weights");
  check_finite_or_throw(b2, "second-layer biases");
}

Network init_network(const MlpSpec& spec) {
  if (spec.input_dim < 1 || spec.hidden_units < 1 || spec.output_dim < 1) {
    throw std::invalid_argument("network dimensions must be positive");
  }
  auto rng = make_rng(spec.seed);
  const auto glorot = [&rng](Eigen::MatrixXd& w, int fan_in, int fan_out) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = u(rng);
    }
  };
  Network net;
  net.w1.resize(spec.input_dim, spec.hidden_units);
  net.b1 = Eigen::VectorXd::Zero(spec.hidden_units);
  net.w2.resize(spec.hidden_units, spec.output_dim);
  net.b2 = Eigen::VectorXd::Zero(spec.output_dim);
  glorot(net.w1, spec.input_dim, spec.hidden_units);
  glorot(net.w2, spec.hidden_units, spec.output_dim);
  return net;
}

ForwardCache forward_cached(const Network& net, const Eigen::MatrixXd& batch) {
  if (batch.cols() != net.input_dim()) {
    throw std::invalid_argument("batch width does not match network input");
  }
  check_finite_or_throw(batch, "network input");
  ForwardCache cache;
  cache.hidden_pre = (batch * net.w1).rowwise() + net.b1.transpose();
  cache.hidden = cache.hidden_pre.cwiseMax(0.0);
  Eigen::MatrixXd logits = (cache.hidden * net.w2).rowwise() + net.b2.transpose();
  const Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
  logits.colwise() -= row_max;
  cache.probs = logits.array().exp();
  const Eigen::VectorXd row_sum = cache.probs.rowwise().sum();
  cache.probs.array().colwise() /= row_sum.array();
  return cache;
}

Eigen::MatrixXd forward(const Network& net, const Eigen::MatrixXd& batch) {
  return forward_cached(net, batch).probs;
}

Eigen::VectorXd per_sample_loss(const Eigen::MatrixXd& probs,
                                std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != probs.rows()) {
    throw std::invalid_argument("label count does not match batch");
  }
  Eigen::VectorXd loss(probs.rows());
  for (Eigen::Index b = 0; b < probs.rows(); ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    if (y < 0 || y >= probs.cols()) throw std::invalid_argument("label outside [0,K)");
    loss(b) = -std::log(probs(b, y) + 1e-12);
  }
  return loss;
}

Gradients backward(const Network& net, const Eigen::MatrixXd& batch,
                   std::span<const int> labels, std::span<const int> selected) {
  if (selected.empty()) throw std::invalid_argument("empty gradient selection");
  if (static_cast<Eigen::Index>(labels.size()) != batch.rows()) {
    throw std::invalid_argument("label count does not match batch");
  }
  const ForwardCache cache = forward_cached(net, batch);
  const double inv_n = 1.0 / static_cast<double>(selected.size());

  Eigen::MatrixXd dlogits = Eigen::MatrixXd::Zero(batch.rows(), net.output_dim());
  for (int s : selected) {
    if (s < 0 || s >= batch.rows()) throw std::invalid_argument("selected index outside batch");
    dlogits.row(s) += cache.probs.row(s) * inv_n;
    dlogits(s, labels[static_cast<std::size_t>(s)]) -= inv_n;
  }

  Gradients g;
  g.w2 = cache.hidden.transpose() * dlogits;
  g.b2 = dlogits.colwise().sum().transpose();
  Eigen::MatrixXd dhidden = dlogits * net.w2.transpose();
  dhidden = (cache.hidden_pre.array() > 0.0).select(dhidden, 0.0);
  g.w1 = batch.transpose() * dhidden;
  g.b1 = dhidden.colwise().sum().transpose();
  return g;
}

OptimizerState make_optimizer(const Network& net, double lr) {
  OptimizerState opt;
  opt.lr = lr;
  opt.m = zeros_like(net);
  opt.v = zeros_like(net);
  return opt;
}

void step(Network& net, OptimizerState& opt, const Gradients& g) {
  check_finite_or_throw(g.w1, "gradients");
  check_finite_or_throw(g.b1, "gradients");
  check_finite_or_throw(g.w2, "gradients");
  check_finite_or_throw(g.b2, "gradients");
  ++opt.step_count;
  const double bc1 = 1.0 - std::pow(opt.beta1, opt.step_count);
  const double bc2 = 1.0 - std::pow(opt.beta2, opt.step_count);
  adam_update(net.w1, opt.m.w1, opt.v.w1, g.w1, opt, bc1, bc2);
  adam_update(net.b1, opt.m.b1, opt.v.b1, g.b1, opt, bc1, bc2);
  adam_update(net.w2, opt.m.w2, opt.v.w2, g.w2, opt, bc1, bc2);
  adam_update(net.b2, opt.m.b2, opt.v.b2, g.b2, opt, bc1, bc2);
  net.check_finite();
}

int FeatureEncoder::encoded_dim() const {
  int dim = 0;
  for (const auto& col : scaler.schema.columns) {
    dim += col.kind == ColumnKind::Continuous
               ? 1
               : static_cast<int>(col.vocabulary.size());
  }
  return dim;
}

Eigen::MatrixXd FeatureEncoder::encode(const Eigen::MatrixXd& features) const {
  const auto& schema = scaler.schema;
  if (features.cols() != schema.num_columns()) {
    throw std::invalid_argument("feature width does not match encoder schema");
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(features.rows(), encoded_dim());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    int offset = 0;
    for (int j = 0; j < schema.num_columns(); ++j) {
      const auto& col = schema.columns[static_cast<std::size_t>(j)];
      if (col.kind == ColumnKind::Continuous) {
        out(i, offset) = (features(i, j) - scaler.mean(j)) / scaler.stddev(j);
        ++offset;
      } else {
        const int v = static_cast<int>(features(i, j));
        if (v < 0 || v >= static_cast<int>(col.vocabulary.size())) {
          throw std::invalid_argument("category index outside vocabulary");
        }
        out(i, offset + v) = 1.0;
        offset += static_cast<int>(col.vocabulary.size());
      }
    }
  }
  return out;
}

FeatureEncoder fit_encoder(const Dataset& train) {
  return {standardize_fit_transform(train).first};
}

void save_network_csv(const Network& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << net.input_dim() << ',' << net.hidden_units() << ',' << net.output_dim()
      << '\n';
  const auto dump = [&out](const Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) out << format_double(m(i, j)) << '\n';
    }
  };
  dump(net.w1);
  dump(net.b1);
  dump(net.w2);
  dump(net.b2);
}

Network load_network_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("empty network file: " + path);
  std::stringstream hs(header);
  std::string cell;
  int dims[3] = {0, 0, 0};
  for (int& d : dims) {
    if (!std::getline(hs, cell, ',')) throw std::runtime_error("bad shape header in " + path);
    d = std::stoi(cell);
    if (d < 1) throw std::runtime_error("bad network shape in " + path);
  }
  Network net;
  net.w1.resize(dims[0], dims[1]);
  net.b1.resize(dims[1]);
  net.w2.resize(dims[1], dims[2]);
  net.b2.resize(dims[2]);
  const auto fill = [&in, &path](Eigen::Ref<Eigen::MatrixXd> m) {
    std::string line;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        if (!std::getline(in, line)) throw std::runtime_error("truncated network file: " + path);
        m(i, j) = std::stod(line);
      }
    }
  };
  fill(net.w1);
  fill(net.b1);
  fill(net.w2);
  fill(net.b2);
  net.check_finite();
  return net;
}

}  // namespace crowdteacher
