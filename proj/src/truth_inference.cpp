#include "crowdteacher/truth_inference.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "crowdteacher/tabular.hpp"

namespace crowdteacher {

namespace {

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

// Fills certainty and hard labels from P; argmax ties go to the lower index.
void finalize(InferenceResult& res) {
  const Eigen::Index n = res.P.rows();
  const Eigen::Index k_count = res.P.cols();
  res.certainty.resize(n);
  res.hard_labels.assign(static_cast<std::size_t>(n), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    int best = 0;
    for (Eigen::Index k = 1; k < k_count; ++k) {
      if (res.P(i, k) > res.P(i, best)) best = static_cast<int>(k);
    }
    res.hard_labels[static_cast<std::size_t>(i)] = best;
    res.certainty(i) = res.P(i, best);
  }
}

}  // namespace

void InferenceResult::validate() const {
  const Eigen::Index n = P.rows();
  if (certainty.size() != n || static_cast<Eigen::Index>(hard_labels.size()) != n) {
    throw std::logic_error("inference result size mismatch");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(P.row(i).sum() - 1.0) > 1e-9) {
      throw std::logic_error("posterior row does not sum to 1");
    }
    if (P.row(i).minCoeff() < -1e-12 || P.row(i).maxCoeff() > 1.0 + 1e-12) {
      throw std::logic_error("posterior entry outside [0,1]");
    }
    if (std::abs(certainty(i) - P.row(i).maxCoeff()) > 1e-12) {
      throw std::logic_error("certainty is not the row maximum");
    }
  }
  if (std::abs(priors.sum() - 1.0) > 1e-9) throw std::logic_error("priors do not sum to 1");
  for (const auto& c : confusion) {
    for (Eigen::Index k = 0; k < c.rows(); ++k) {
      if (std::abs(c.row(k).sum() - 1.0) > 1e-9) {
        throw std::logic_error("confusion row does not sum to 1");
      }
    }
  }
}

InferenceResult majority_vote(const AnswerMatrix& a, int num_classes) {
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  const int n = a.num_samples();
  const int r_count = a.num_annotators();
  InferenceResult res;
  res.P = Eigen::MatrixXd::Zero(n, num_classes);
  for (int i = 0; i < n; ++i) {
    int total = 0;
    for (int r = 0; r < r_count; ++r) {
      const int v = a.entries(i, r);
      if (v == AnswerMatrix::kMissing) continue;
      if (v < 0 || v >= num_classes) {
        throw std::invalid_argument("annotation outside [0,K) at row " + std::to_string(i));
      }
      res.P(i, v) += 1.0;
      ++total;
    }
    if (total == 0) {
      throw std::invalid_argument("row " + std::to_string(i) + " has no annotations");
    }
    res.P.row(i) /= static_cast<double>(total);
  }
  res.confusion.assign(static_cast<std::size_t>(r_count),
                       Eigen::MatrixXd::Identity(num_classes, num_classes));
  res.priors = res.P.colwise().mean();
  res.iterations = 0;
  res.converged = true;
  finalize(res);
  return res;
}

InferenceResult dawid_skene(const AnswerMatrix& a, int num_classes, int max_iters,
                            double tol, double smoothing) {
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
  if (!(smoothing > 0.0)) throw std::invalid_argument("smoothing must be positive");

  InferenceResult res = majority_vote(a, num_classes);
  const int n = a.num_samples();
  const int r_count = a.num_annotators();

  Eigen::MatrixXd p_prev = res.P;
  std::vector<Eigen::MatrixXd> log_conf(static_cast<std::size_t>(r_count));
  Eigen::VectorXd log_priors(num_classes);

  res.converged = false;
  for (int iter = 1; iter <= max_iters; ++iter) {
    // M-step: smoothed confusion counts, mean-posterior priors.
    for (int r = 0; r < r_count; ++r) {
      Eigen::MatrixXd counts =
          Eigen::MatrixXd::Constant(num_classes, num_classes, smoothing);
      for (int i = 0; i < n; ++i) {
        const int v = a.entries(i, r);
        if (v == AnswerMatrix::kMissing) continue;
        counts.col(v) += p_prev.row(i).transpose();
      }
      Eigen::MatrixXd conf(num_classes, num_classes);
      for (int k = 0; k < num_classes; ++k) {
        conf.row(k) = counts.row(k) / counts.row(k).sum();
      }
      res.confusion[static_cast<std::size_t>(r)] = conf;
      log_conf[static_cast<std::size_t>(r)] = conf.array().log();
    }
    res.priors = p_prev.colwise().mean();
    log_priors = res.priors.array().log();

    // E-step in log space; the per-sample normalizer is the sample's
    // contribution to the observed-data log likelihood.
    double ll = 0.0;
    Eigen::MatrixXd p_next(n, num_classes);
    Eigen::VectorXd s(num_classes);
    for (int i = 0; i < n; ++i) {
      s = log_priors;
      for (int r = 0; r < r_count; ++r) {
        const int v = a.entries(i, r);
        if (v == AnswerMatrix::kMissing) continue;
        s += log_conf[static_cast<std::size_t>(r)].col(v);
      }
      const double lse = log_sum_exp(s);
      ll += lse;
      p_next.row(i) = (s.array() - lse).exp();
      p_next.row(i) /= p_next.row(i).sum();
      if (!p_next.row(i).allFinite()) {
        throw std::runtime_error("non-finite posterior at row " + std::to_string(i));
      }
    }
    if (!res.log_likelihood.empty()) {
      const double prev = res.log_likelihood.back();
      if (ll < prev - 1e-8 * std::max(1.0, std::abs(prev))) {
        throw std::logic_error("EM log likelihood decreased");
      }
    }
    res.log_likelihood.push_back(ll);

    const double delta = (p_next - p_prev).cwiseAbs().maxCoeff();
    p_prev = p_next;
    res.iterations = iter;
    if (delta < tol) {
      res.converged = true;
      break;
    }
  }

  res.P = std::move(p_prev);
  finalize(res);
  res.validate();
  return res;
}

Eigen::VectorXd certainty(const InferenceResult& r) {
  return r.P.rowwise().maxCoeff();
}

void save_inference_csv(const InferenceResult& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  for (Eigen::Index k = 0; k < r.P.cols(); ++k) out << "p_" << k << ',';
  out << "certainty\n";
  for (Eigen::Index i = 0; i < r.P.rows(); ++i) {
    for (Eigen::Index k = 0; k < r.P.cols(); ++k) {
      out << format_double(r.P(i, k)) << ',';
    }
    out << format_double(r.certainty(i)) << '\n';
  }
}

}  // namespace crowdteacher
