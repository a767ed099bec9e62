#pragma once

#include <cmath>
#include <random>
#include <stdexcept>

#include "rsm/common.hpp"
#include "rsm/oracle/soft_eval.hpp"

namespace rsm::oracle {

inline int sample_categorical(const Eigen::Ref<const Eigen::RowVectorXd>& p, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    acc += p[j];
    if (u < acc) return static_cast<int>(j);
  }
  for (Eigen::Index j = p.size() - 1; j >= 0; --j)
    if (p[j] > 0.0) return static_cast<int>(j);
  throw std::invalid_argument("sample_categorical: empty distribution");
}

/// Softmax tabular policy exposed through the mixture estimators' policy interface.
/// The score is taken with respect to the flattened (row-major) logit table.
struct TabularPolicyModel {
  using State = int;
  using Action = int;

  Eigen::MatrixXd logits;
  TabularPolicy pi;

  explicit TabularPolicyModel(Eigen::MatrixXd l) : logits(std::move(l)), pi(softmax_policy(logits)) {}

  Action sample(State s, Rng& rng) const { return sample_categorical(pi.row(s), rng); }
  double logprob(State s, Action a) const { return std::log(pi(s, a)); }
  double entropy(State s, int samples, Rng& rng) const {
    if (samples < 1) throw std::invalid_argument("entropy: need at least one sample");
    double acc = 0.0;
    for (int k = 0; k < samples; ++k) acc -= logprob(s, sample(s, rng));
    return acc / samples;
  }
  Eigen::VectorXd score(State s, Action a) const {
    const Eigen::Index na = pi.cols();
    Eigen::VectorXd g = Eigen::VectorXd::Zero(pi.size());
    g.segment(s * na, na) = -pi.row(s).transpose();
    g[s * na + a] += 1.0;
    return g;
  }
};

/// Exact soft Q table as a critic.
struct TabularCritic {
  const Eigen::MatrixXd* q;
  double min_q(int s, int a) const { return (*q)(s, a); }
};

struct TabularSample {
  int s;
  int a;
  double behavior_logp;
};

/// Exact Fisher matrix of the flattened logits under the normalized visitation weights `d`.
inline Eigen::MatrixXd exact_softmax_fim(const TabularPolicy& pi, const Eigen::VectorXd& d) {
  const Eigen::Index ns = pi.rows(), na = pi.cols();
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(ns * na, ns * na);
  for (Eigen::Index s = 0; s < ns; ++s) {
    Eigen::MatrixXd fs = -pi.row(s).transpose() * pi.row(s);
    fs.diagonal() += pi.row(s).transpose();
    f.block(s * na, s * na, na, na) = d[s] * fs;
  }
  return f;
}

}  // namespace rsm::oracle
