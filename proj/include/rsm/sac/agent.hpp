#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsm/common.hpp"
#include "rsm/nn/gaussian_policy.hpp"
#include "rsm/nn/mlp.hpp"
#include "rsm/nn/optim.hpp"
#include "rsm/sac/replay_buffer.hpp"

namespace rsm::sac {

using nn::ParamVector;

/// Raised when a loss goes non-finite; the run is aborted.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SacConfig {
  std::vector<int> hidden{64, 64};
  std::size_t buffer_capacity = 100000;
  std::size_t batch_size = 256;  // also the warmup threshold
  double lr_policy = 4e-5;
  double lr_critic = 3e-4;
  double lr_alpha = 3e-4;
  double gamma = 0.99;
  double tau = 1e-3;  // target smoothing
  int delay = 10;     // critic updates per policy/temperature/target update
  std::optional<double> target_entropy;  // defaults to -dim(A)
  double init_alpha = 0.2;
  nn::OptimizerKind optimizer = nn::OptimizerKind::adam;
  double grad_clip = 10.0;
};

struct AgentState {
  nn::MlpSpec policy_spec;
  nn::MlpSpec critic_spec;
  ParamVector theta;
  ParamVector critic1, critic2;
  ParamVector target1, target2;
  double log_alpha = 0.0;
  ReplayBuffer buffer;
  std::int64_t policy_updates = 0;  // k
  std::int64_t critic_updates = 0;  // counter
  SacConfig config;
  nn::AdamState opt_policy, opt_critic1, opt_critic2, opt_alpha;

  double alpha() const { return std::exp(log_alpha); }
  int obs_dim() const { return policy_spec.input_dim(); }
  int act_dim() const { return nn::action_dim(policy_spec); }
  double target_entropy() const { return config.target_entropy.value_or(-static_cast<double>(act_dim())); }
};

inline AgentState make_agent(int obs_dim, int act_dim, const SacConfig& config, Rng& rng) {
  if (config.delay < 1) throw std::invalid_argument("SacConfig: delay must be >= 1");
  if (config.init_alpha <= 0.0) throw std::invalid_argument("SacConfig: init_alpha must be positive");
  AgentState agent{nn::policy_spec(obs_dim, config.hidden, act_dim),
                   nn::critic_spec(obs_dim, act_dim, config.hidden),
                   {}, {}, {}, {}, {}, std::log(config.init_alpha), ReplayBuffer(config.buffer_capacity),
                   0, 0, config, {}, {}, {}, {}};
  agent.theta = nn::init_params(agent.policy_spec, rng);
  agent.critic1 = nn::init_params(agent.critic_spec, rng);
  agent.critic2 = nn::init_params(agent.critic_spec, rng);
  agent.target1 = agent.critic1;
  agent.target2 = agent.critic2;
  return agent;
}

// ---------------------------------------------------------------------------
// Batched policy evaluation

struct PolicyBatch {
  nn::ForwardCache cache;
  Eigen::MatrixXd mean;
  Eigen::MatrixXd log_std;     // clamped
  Eigen::MatrixXd clamp_mask;  // 1 where the raw log-std was inside the clamp interval
  Eigen::MatrixXd noise;
  Eigen::MatrixXd u;
  Eigen::MatrixXd action;
  Eigen::VectorXd logp;
};

inline PolicyBatch sample_policy_batch(const nn::MlpSpec& spec, const ParamVector& theta, const Eigen::MatrixXd& states,
                                       const Eigen::MatrixXd& noise) {
  PolicyBatch pb;
  pb.cache = nn::forward_cached(spec, theta, states);
  const Eigen::Index m = nn::action_dim(spec);
  const auto& raw = pb.cache.output();
  pb.mean = raw.topRows(m);
  const Eigen::MatrixXd raw_log_std = raw.bottomRows(m);
  pb.log_std = raw_log_std.cwiseMax(nn::kLogStdMin).cwiseMin(nn::kLogStdMax);
  pb.clamp_mask = ((raw_log_std.array() >= nn::kLogStdMin) && (raw_log_std.array() <= nn::kLogStdMax)).cast<double>();
  pb.noise = noise;
  const Eigen::MatrixXd sigma = pb.log_std.array().exp();
  pb.u = pb.mean + noise.cwiseProduct(sigma);
  pb.action = pb.u.array().tanh();
  const Eigen::ArrayXXd gauss = -0.5 * noise.array().square() - pb.log_std.array() - kLogSqrtTwoPi;
  const Eigen::ArrayXXd corr = (1.0 - pb.action.array().square() + nn::kTanhEps).log();
  pb.logp = (gauss - corr).colwise().sum().transpose();
  return pb;
}

inline Eigen::MatrixXd stack(const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom) {
  Eigen::MatrixXd out(top.rows() + bottom.rows(), top.cols());
  out << top, bottom;
  return out;
}

// ---------------------------------------------------------------------------
// Soft Q targets and critic loss

/// r + (1 - done) * gamma * (min target Q(s', a') - alpha log pi(a'|s')), one a' per transition.
inline Eigen::VectorXd q_target(const AgentState& agent, const Minibatch& batch, const Eigen::MatrixXd& next_noise) {
  const auto pb = sample_policy_batch(agent.policy_spec, agent.theta, batch.s_next, next_noise);
  const Eigen::MatrixXd x = stack(batch.s_next, pb.action);
  const Eigen::RowVectorXd q1 = nn::forward(agent.critic_spec, agent.target1, x);
  const Eigen::RowVectorXd q2 = nn::forward(agent.critic_spec, agent.target2, x);
  const Eigen::VectorXd soft = q1.cwiseMin(q2).transpose() - agent.alpha() * pb.logp;
  return batch.r + agent.config.gamma * (1.0 - batch.done.array()).matrix().cwiseProduct(soft);
}

inline Eigen::VectorXd q_target(const AgentState& agent, const Minibatch& batch, Rng& rng) {
  return q_target(agent, batch, standard_normal(agent.act_dim(), batch.size(), rng));
}

struct LossGrad {
  double loss;
  ParamVector grad;
};

/// J_Q = 1/2 mean (Q(s,a) - target)^2.
inline LossGrad critic_loss_and_grad(const nn::MlpSpec& spec, const ParamVector& critic, const Minibatch& batch,
                                     const Eigen::VectorXd& targets) {
  const auto cache = nn::forward_cached(spec, critic, stack(batch.s, batch.a));
  const Eigen::RowVectorXd err = cache.output().row(0) - targets.transpose();
  const double n = static_cast<double>(batch.size());
  LossGrad out;
  out.loss = 0.5 * err.squaredNorm() / n;
  out.grad = nn::backward(spec, critic, cache, err / n).param_grad;
  return out;
}

struct CriticLosses {
  double loss1;
  double loss2;
};

inline CriticLosses update_critics(AgentState& agent, const Minibatch& batch, Rng& rng) {
  const Eigen::VectorXd targets = q_target(agent, batch, rng);
  auto g1 = critic_loss_and_grad(agent.critic_spec, agent.critic1, batch, targets);
  auto g2 = critic_loss_and_grad(agent.critic_spec, agent.critic2, batch, targets);
  if (!std::isfinite(g1.loss) || !std::isfinite(g2.loss) || !g1.grad.allFinite() || !g2.grad.allFinite())
    throw DivergenceError("critic loss diverged (loss1=" + std::to_string(g1.loss) +
                          ", loss2=" + std::to_string(g2.loss) + ")");
  nn::clip_global_norm(g1.grad, agent.config.grad_clip);
  nn::clip_global_norm(g2.grad, agent.config.grad_clip);
  nn::descend(agent.critic1, g1.grad, agent.config.lr_critic, agent.config.optimizer, agent.opt_critic1);
  nn::descend(agent.critic2, g2.grad, agent.config.lr_critic, agent.config.optimizer, agent.opt_critic2);
  ++agent.critic_updates;
  return {g1.loss, g2.loss};
}

// ---------------------------------------------------------------------------
// Policy loss

/// J_pi = mean(alpha log pi(a|s) - min_x Q_x(s, a)), a = tanh(mean + noise * std), with the
/// gradient flowing through the reparameterized action into both critics' inputs.
inline LossGrad policy_loss_and_grad(const nn::MlpSpec& policy_spec, const ParamVector& theta,
                                     const nn::MlpSpec& critic_spec, const ParamVector& critic1,
                                     const ParamVector& critic2, double alpha, const Eigen::MatrixXd& states,
                                     const Eigen::MatrixXd& noise) {
  const auto pb = sample_policy_batch(policy_spec, theta, states, noise);
  const Eigen::MatrixXd x = stack(states, pb.action);
  const auto c1 = nn::forward_cached(critic_spec, critic1, x);
  const auto c2 = nn::forward_cached(critic_spec, critic2, x);
  const Eigen::Index n = states.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::RowVectorXd pick1(n), pick2(n);
  double min_q_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool first = c1.output()(0, i) <= c2.output()(0, i);
    pick1[i] = first ? -inv_n : 0.0;
    pick2[i] = first ? 0.0 : -inv_n;
    min_q_sum += first ? c1.output()(0, i) : c2.output()(0, i);
  }
  const auto b1 = nn::backward(critic_spec, critic1, c1, pick1, false);
  const auto b2 = nn::backward(critic_spec, critic2, c2, pick2, false);
  const Eigen::Index m = pb.action.rows();
  const Eigen::MatrixXd d_action = b1.input_grad.bottomRows(m) + b2.input_grad.bottomRows(m);

  const Eigen::ArrayXXd a = pb.action.array();
  const Eigen::ArrayXXd one_minus_a2 = 1.0 - a.square();
  // d logp / du through the tanh correction
  const Eigen::ArrayXXd dlogp_du = 2.0 * a * one_minus_a2 / (one_minus_a2 + nn::kTanhEps);
  const Eigen::ArrayXXd d_u = alpha * inv_n * dlogp_du + d_action.array() * one_minus_a2;
  const Eigen::ArrayXXd sigma = pb.log_std.array().exp();
  const Eigen::ArrayXXd d_log_std = (-alpha * inv_n + d_u * pb.noise.array() * sigma) * pb.clamp_mask.array();

  Eigen::MatrixXd d_out(2 * m, n);
  d_out << d_u.matrix(), d_log_std.matrix();
  LossGrad out;
  out.loss = (alpha * pb.logp.sum() - min_q_sum) * inv_n;
  out.grad = nn::backward(policy_spec, theta, pb.cache, d_out).param_grad;
  return out;
}

inline double update_policy(AgentState& agent, const Minibatch& batch, Rng& rng) {
  const Eigen::MatrixXd noise = standard_normal(agent.act_dim(), batch.size(), rng);
  auto lg = policy_loss_and_grad(agent.policy_spec, agent.theta, agent.critic_spec, agent.critic1, agent.critic2,
                                 agent.alpha(), batch.s, noise);
  if (!std::isfinite(lg.loss) || !lg.grad.allFinite())
    throw DivergenceError("policy loss diverged (loss=" + std::to_string(lg.loss) + ")");
  nn::clip_global_norm(lg.grad, agent.config.grad_clip);
  nn::descend(agent.theta, lg.grad, agent.config.lr_policy, agent.config.optimizer, agent.opt_policy);
  ++agent.policy_updates;
  return lg.loss;
}

// ---------------------------------------------------------------------------
// Temperature

/// d J(alpha) / d log(alpha) for J(alpha) = mean(-alpha log pi - alpha * target_entropy).
inline double temperature_grad(double log_alpha, const Eigen::VectorXd& logp, double target_entropy) {
  return -std::exp(log_alpha) * (logp.mean() + target_entropy);
}

inline double update_temperature(AgentState& agent, const Minibatch& batch, Rng& rng) {
  const auto pb = sample_policy_batch(agent.policy_spec, agent.theta, batch.s,
                                      standard_normal(agent.act_dim(), batch.size(), rng));
  Eigen::VectorXd g(1);
  g[0] = temperature_grad(agent.log_alpha, pb.logp, agent.target_entropy());
  Eigen::VectorXd p(1);
  p[0] = agent.log_alpha;
  nn::descend(p, g, agent.config.lr_alpha, agent.config.optimizer, agent.opt_alpha);
  agent.log_alpha = p[0];
  return agent.alpha();
}

inline void polyak_update(AgentState& agent) {
  const double rho = agent.config.tau;
  agent.target1 = rho * agent.critic1 + (1.0 - rho) * agent.target1;
  agent.target2 = rho * agent.critic2 + (1.0 - rho) * agent.target2;
}

// ---------------------------------------------------------------------------
// Acting and the local learning step

inline nn::ActionSample act(const AgentState& agent, const Eigen::VectorXd& state, Rng& rng) {
  return nn::sample_action(agent.policy_spec, agent.theta, state, standard_normal(agent.act_dim(), rng));
}

/// Deterministic action tanh(mean).
inline Eigen::VectorXd act_greedy(const AgentState& agent, const Eigen::VectorXd& state) {
  return nn::policy_output(agent.policy_spec, agent.theta, state).mean.array().tanh();
}

struct LearnReport {
  bool critic_updated = false;
  bool policy_updated = false;
};

/// Stores `t`, then runs one critic update once the buffer holds a full batch, and the
/// delayed policy/temperature/target block when counter % delay == 0 or at episode end.
inline LearnReport learn(AgentState& agent, Transition t, bool episode_end, Rng& rng) {
  agent.buffer.push(std::move(t));
  LearnReport report;
  if (agent.buffer.size() < agent.config.batch_size) return report;
  const auto idx = agent.buffer.sample_indices(agent.config.batch_size, rng);
  const Minibatch batch = Minibatch::gather(agent.buffer, idx);
  const std::int64_t counter = agent.critic_updates;
  update_critics(agent, batch, rng);
  report.critic_updated = true;
  if (counter % agent.config.delay == 0 || episode_end) {
    update_policy(agent, batch, rng);
    update_temperature(agent, batch, rng);
    polyak_update(agent);
    report.policy_updated = true;
  }
  return report;
}

struct StepOutcome {
  Eigen::VectorXd next_obs;
  double reward = 0.0;
  bool terminal = false;   // true environment termination (cuts the bootstrap)
  bool truncated = false;  // horizon reached
};

/// Single-agent environment interface used by local_step.
template <class Env>
concept SingleAgentEnv = requires(Env env, const Eigen::VectorXd& a, Rng& rng) {
  { env.observation() } -> std::convertible_to<Eigen::VectorXd>;
  { env.step(a) } -> std::same_as<StepOutcome>;
  env.reset(rng);
};

template <SingleAgentEnv Env>
Transition local_step(AgentState& agent, Env& env, Rng& rng) {
  const Eigen::VectorXd s = env.observation();
  const auto sample = act(agent, s, rng);
  const StepOutcome out = env.step(sample.action);
  Transition t{s, sample.action, out.reward, out.next_obs, sample.logp, out.terminal};
  const bool episode_end = out.terminal || out.truncated;
  learn(agent, t, episode_end, rng);
  if (episode_end) env.reset(rng);
  return t;
}

}  // namespace rsm::sac
