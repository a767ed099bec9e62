#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "rsm/nn/mlp.hpp"

namespace rsm::nn {

enum class OptimizerKind { sgd, adam };

inline OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw std::invalid_argument("unknown optimizer '" + name + "'");
}

inline const char* to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

/// Rescales `g` in place so that its L2 norm is at most `max_norm`. Returns the pre-clip norm.
inline double clip_global_norm(Eigen::Ref<Eigen::VectorXd> g, double max_norm) {
  const double norm = g.norm();
  if (max_norm > 0.0 && norm > max_norm) g *= max_norm / norm;
  return norm;
}

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long steps = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One descent step p <- p - lr * direction(g).
inline void descend(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& g, double lr, OptimizerKind kind,
                    AdamState& state) {
  if (kind == OptimizerKind::sgd) {
    params -= lr * g;
    return;
  }
  if (state.m.size() != g.size()) {
    state.m = Eigen::VectorXd::Zero(g.size());
    state.v = Eigen::VectorXd::Zero(g.size());
    state.steps = 0;
  }
  ++state.steps;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * g;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * g.cwiseAbs2();
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.steps));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.steps));
  params.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
}

}  // namespace rsm::nn
