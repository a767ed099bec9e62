#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "rsm/common.hpp"

namespace rsm::envs {

/// Finite discounted MDP with entropy temperature alpha.
struct TabularSoftMdp {
  int states = 0;
  int actions = 0;
  std::vector<Eigen::MatrixXd> transition;  // transition[a](s, s') = P(s'|s,a)
  Eigen::MatrixXd reward;                   // states x actions
  double gamma = 0.9;
  double alpha = 0.0;
  double r_max = 1.0;
  Eigen::VectorXd rho0;

  void validate() const {
    if (states < 1 || actions < 1) throw std::invalid_argument("tabular: empty state or action set");
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("tabular: gamma must be in (0, 1)");
    if (alpha < 0.0) throw std::invalid_argument("tabular: alpha must be >= 0");
    if (static_cast<int>(transition.size()) != actions) throw std::invalid_argument("tabular: transition size");
    for (const auto& p : transition) {
      if (p.rows() != states || p.cols() != states) throw std::invalid_argument("tabular: transition shape");
      if (((p.rowwise().sum().array() - 1.0).abs() > 1e-12).any() || (p.array() < 0).any())
        throw std::invalid_argument("tabular: transition rows must be stochastic");
    }
    if (reward.rows() != states || reward.cols() != actions) throw std::invalid_argument("tabular: reward shape");
    if (rho0.size() != states) throw std::invalid_argument("tabular: rho0 shape");
  }
};

/// Random instance: Dirichlet(1) transition rows, rewards ~ U[0, r_max], uniform rho0.
inline TabularSoftMdp make_tabular(std::uint64_t seed, int states, int actions, double gamma, double alpha,
                                   double r_max = 1.0) {
  if (states < 1 || states > 8 || actions < 1 || actions > 5)
    throw std::invalid_argument("make_tabular: need 1 <= |S| <= 8 and 1 <= |A| <= 5");
  Rng rng(seed);
  std::exponential_distribution<double> expo(1.0);
  TabularSoftMdp mdp;
  mdp.states = states;
  mdp.actions = actions;
  mdp.gamma = gamma;
  mdp.alpha = alpha;
  mdp.r_max = r_max;
  mdp.transition.assign(actions, Eigen::MatrixXd(states, states));
  for (int a = 0; a < actions; ++a)
    for (int s = 0; s < states; ++s) {
      double total = 0.0;
      for (int t = 0; t < states; ++t) total += mdp.transition[a](s, t) = expo(rng);
      mdp.transition[a].row(s) /= total;
    }
  mdp.reward.resize(states, actions);
  for (int s = 0; s < states; ++s)
    for (int a = 0; a < actions; ++a) mdp.reward(s, a) = uniform01(rng) * r_max;
  mdp.rho0 = Eigen::VectorXd::Constant(states, 1.0 / states);
  mdp.validate();
  return mdp;
}

}  // namespace rsm::envs
