#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "rsm/mixture/estimators.hpp"
#include "rsm/mixture/models.hpp"
#include "rsm/sac/agent.hpp"

namespace rsm::mixture {

struct MixConfig {
  int samples = 50;          // M, transitions per referential evaluation
  int entropy_samples = 8;   // K for each entropy estimate
  int fim_actions = 4;       // actions per state for the FIM
  int epsilon_actions = 8;   // actions per state from pi~ for epsilon
  int value_actions = 8;     // actions per state from pi for V(s)
  double c_safety = 0.9;
  double zeta_cap = 1.0;
  double w_max = 20.0;
  double epsilon_floor = 1e-6;
  FimMode fim_mode = FimMode::batch_average;
};

/// Outcome of evaluating one referential policy.
struct MixDecision {
  double advantage = 0.0;
  double advantage_se = 0.0;
  double epsilon = 0.0;
  double c_const = 0.0;
  double quad_form = 0.0;
  double zeta_bound = 0.0;  // +infinity when unbounded
  double zeta_used = 0.0;
  bool accepted = false;
  long clipped = 0;
  bool low_confidence = false;
};

/// The regulated step size: min(cap, c_safety * bound).
inline double regulated_zeta(double bound, const MixConfig& config) {
  if (std::isinf(bound)) return config.zeta_cap;
  return std::min(config.zeta_cap, config.c_safety * bound);
}

/// Evaluates one referential parameter vector against `theta` and the agent's critics and buffer.
inline MixDecision evaluate_referential(const sac::AgentState& agent, const nn::ParamVector& theta,
                                        const nn::ParamVector& referential, const MixConfig& config, Rng& rng) {
  MixDecision decision;
  if (agent.buffer.empty()) return decision;
  std::vector<sac::Transition> batch;
  for (std::size_t i : agent.buffer.sample_indices(static_cast<std::size_t>(config.samples), rng))
    batch.push_back(agent.buffer[i]);

  const GaussianPolicyModel current{&agent.policy_spec, &theta};
  const GaussianPolicyModel candidate{&agent.policy_spec, &referential};
  const TwinCriticModel critic{&agent.critic_spec, &agent.critic1, &agent.critic2};
  const double alpha = agent.alpha();

  const auto adv = estimate_policy_advantage(current, candidate, critic, alpha, batch, rng, config.entropy_samples,
                                             config.w_max);
  decision.advantage = adv.value;
  decision.advantage_se = adv.standard_error;
  decision.clipped = adv.clipped;
  decision.low_confidence = adv.low_confidence;
  if (!(adv.value > 0.0)) return decision;

  std::vector<Eigen::VectorXd> states;
  states.reserve(batch.size());
  for (const auto& t : batch) states.push_back(t.s);
  const Eigen::VectorXd delta = referential - theta;
  decision.quad_form = fim_quadratic_form(current, states, config.fim_actions, rng, config.fim_mode, delta);
  decision.epsilon = std::max(config.epsilon_floor,
                              estimate_epsilon(current, candidate, critic, alpha, states, rng, config.epsilon_actions,
                                               config.value_actions)
                                  .value);
  decision.c_const = penalty_constant(decision.epsilon, agent.config.gamma);
  decision.zeta_bound = zeta_upper_bound(adv.value, decision.epsilon, agent.config.gamma, decision.quad_form);
  decision.zeta_used = regulated_zeta(decision.zeta_bound, config);
  decision.accepted = decision.zeta_used > 0.0;
  return decision;
}

struct CommMixResult {
  nn::ParamVector theta;
  std::vector<MixDecision> decisions;
};

/// Sequentially evaluates each referential in arrival order and mixes the accepted ones,
/// each evaluation seeing the result of the previous mixes.
inline CommMixResult comm_mix(const sac::AgentState& agent, const std::vector<nn::ParamVector>& referentials,
                              const MixConfig& config, Rng& rng) {
  CommMixResult result{agent.theta, {}};
  for (const auto& ref : referentials) {
    auto decision = evaluate_referential(agent, result.theta, ref, config, rng);
    if (decision.accepted) result.theta = mix_parameters(result.theta, ref, decision.zeta_used);
    result.decisions.push_back(decision);
  }
  return result;
}

}  // namespace rsm::mixture
