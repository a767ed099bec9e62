#pragma once

#include <concepts>

#include "rsm/common.hpp"
#include "rsm/nn/gaussian_policy.hpp"
#include "rsm/nn/mlp.hpp"

namespace rsm::mixture {

template <class P>
concept PolicyModel = requires(const P& p, const typename P::State& s, const typename P::Action& a, Rng& rng) {
  typename P::State;
  typename P::Action;
  { p.sample(s, rng) } -> std::convertible_to<typename P::Action>;
  { p.logprob(s, a) } -> std::convertible_to<double>;
  { p.entropy(s, 1, rng) } -> std::convertible_to<double>;
  { p.score(s, a) } -> std::convertible_to<Eigen::VectorXd>;
};

template <class C, class P>
concept CriticModel = requires(const C& c, const typename P::State& s, const typename P::Action& a) {
  { c.min_q(s, a) } -> std::convertible_to<double>;
};

/// Tanh-squashed Gaussian policy network viewed through the PolicyModel interface.
struct GaussianPolicyModel {
  using State = Eigen::VectorXd;
  using Action = Eigen::VectorXd;

  const nn::MlpSpec* spec;
  const nn::ParamVector* theta;

  Action sample(const State& s, Rng& rng) const {
    const auto head = nn::policy_output(*spec, *theta, s);
    return nn::sample_action(head, standard_normal(head.mean.size(), rng)).action;
  }
  double logprob(const State& s, const Action& a) const { return nn::logprob(*spec, *theta, s, a); }
  double entropy(const State& s, int samples, Rng& rng) const {
    return nn::entropy_estimate(*spec, *theta, s, samples, rng);
  }
  Eigen::VectorXd score(const State& s, const Action& a) const { return nn::logprob_grad(*spec, *theta, s, a); }
};

/// min(Q_1, Q_2) of a twin critic pair.
struct TwinCriticModel {
  const nn::MlpSpec* spec;
  const nn::ParamVector* critic1;
  const nn::ParamVector* critic2;

  double min_q(const Eigen::VectorXd& s, const Eigen::VectorXd& a) const {
    Eigen::VectorXd x(s.size() + a.size());
    x << s, a;
    return std::min(nn::forward(*spec, *critic1, x)[0], nn::forward(*spec, *critic2, x)[0]);
  }
};

}  // namespace rsm::mixture
