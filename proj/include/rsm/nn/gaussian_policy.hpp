#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rsm/common.hpp"
#include "rsm/nn/mlp.hpp"

namespace rsm::nn {

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kTanhEps = 1e-6;
// tanh saturates to exactly +-1 in double precision for |u| > ~19; keep actions invertible.
inline constexpr double kActionBound = 1.0 - 1e-12;

struct GaussianPolicyOutput {
  Eigen::VectorXd mean;
  Eigen::VectorXd log_std;  // clamped to [kLogStdMin, kLogStdMax]
};

inline int action_dim(const MlpSpec& spec) { return spec.output_dim() / 2; }

inline GaussianPolicyOutput split_head(const Eigen::VectorXd& raw) {
  const Eigen::Index m = raw.size() / 2;
  GaussianPolicyOutput out;
  out.mean = raw.head(m);
  out.log_std = raw.tail(m).cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
  return out;
}

inline GaussianPolicyOutput policy_output(const MlpSpec& spec, const ParamVector& theta, const Eigen::VectorXd& state) {
  return split_head(forward(spec, theta, state));
}

/// Log-density of the pre-squash sample u under N(mean, diag(exp(log_std))^2).
inline double gaussian_logpdf(const Eigen::VectorXd& u, const GaussianPolicyOutput& head) {
  double lp = 0.0;
  for (Eigen::Index j = 0; j < u.size(); ++j) {
    const double z = (u[j] - head.mean[j]) * std::exp(-head.log_std[j]);
    lp += -0.5 * z * z - head.log_std[j] - kLogSqrtTwoPi;
  }
  return lp;
}

inline double tanh_correction(const Eigen::VectorXd& a) {
  double c = 0.0;
  for (Eigen::Index j = 0; j < a.size(); ++j) c += std::log(1.0 - a[j] * a[j] + kTanhEps);
  return c;
}

struct ActionSample {
  Eigen::VectorXd action;  // in (-1, 1)^dim
  double logp;
};

/// Reparameterized draw a = tanh(mean + noise * std); the caller owns the noise.
inline ActionSample sample_action(const GaussianPolicyOutput& head, const Eigen::VectorXd& noise) {
  const Eigen::VectorXd u = head.mean + noise.cwiseProduct(head.log_std.array().exp().matrix());
  ActionSample out;
  out.action = u.array().tanh().cwiseMax(-kActionBound).cwiseMin(kActionBound).matrix();
  out.logp = gaussian_logpdf(u, head) - tanh_correction(out.action);
  return out;
}

inline ActionSample sample_action(const MlpSpec& spec, const ParamVector& theta, const Eigen::VectorXd& state,
                                  const Eigen::VectorXd& noise) {
  return sample_action(policy_output(spec, theta, state), noise);
}

inline double logprob(const GaussianPolicyOutput& head, const Eigen::VectorXd& action) {
  Eigen::VectorXd u(action.size());
  for (Eigen::Index j = 0; j < action.size(); ++j) {
    if (!(std::abs(action[j]) < 1.0)) throw std::domain_error("logprob: action component outside (-1, 1)");
    u[j] = std::atanh(action[j]);
  }
  return gaussian_logpdf(u, head) - tanh_correction(action);
}

inline double logprob(const MlpSpec& spec, const ParamVector& theta, const Eigen::VectorXd& state,
                      const Eigen::VectorXd& action) {
  return logprob(policy_output(spec, theta, state), action);
}

/// Monte Carlo entropy, (1/K) sum of -log pi(a_k|s).
inline double entropy_estimate(const MlpSpec& spec, const ParamVector& theta, const Eigen::VectorXd& state, int samples,
                               Rng& rng) {
  if (samples < 1) throw std::invalid_argument("entropy_estimate: need at least one sample");
  const auto head = policy_output(spec, theta, state);
  double acc = 0.0;
  for (int k = 0; k < samples; ++k) acc -= sample_action(head, standard_normal(head.mean.size(), rng)).logp;
  return acc / samples;
}

/// Score vector d log pi(a|s) / d theta for a fixed action.
inline ParamVector logprob_grad(const MlpSpec& spec, const ParamVector& theta, const Eigen::VectorXd& state,
                                const Eigen::VectorXd& action) {
  const auto cache = forward_cached(spec, theta, Batch(state));
  const Eigen::VectorXd raw = cache.output().col(0);
  const auto head = split_head(raw);
  const Eigen::Index m = head.mean.size();
  Batch d_out(2 * m, 1);
  for (Eigen::Index j = 0; j < m; ++j) {
    if (!(std::abs(action[j]) < 1.0)) throw std::domain_error("logprob_grad: action component outside (-1, 1)");
    const double sigma = std::exp(head.log_std[j]);
    const double z = (std::atanh(action[j]) - head.mean[j]) / sigma;
    d_out(j, 0) = z / sigma;
    const bool active = raw[m + j] >= kLogStdMin && raw[m + j] <= kLogStdMax;
    d_out(m + j, 0) = active ? z * z - 1.0 : 0.0;
  }
  return backward(spec, theta, cache, d_out).param_grad;
}

}  // namespace rsm::nn
