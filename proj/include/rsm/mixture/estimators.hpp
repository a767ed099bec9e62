#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsm/common.hpp"
#include "rsm/mixture/models.hpp"

namespace rsm::mixture {

enum class FimMode { full, batch_average };

inline FimMode parse_fim_mode(const std::string& s) {
  if (s == "full") return FimMode::full;
  if (s == "batch_average" || s == "batch-average") return FimMode::batch_average;
  throw std::invalid_argument("unknown FIM mode '" + s + "'");
}

inline const char* to_string(FimMode m) { return m == FimMode::full ? "full" : "batch_average"; }

namespace detail {

struct RunningMean {
  double m = 0.0;
  double m2 = 0.0;
  long n = 0;

  void add(double x) {
    ++n;
    const double d = x - m;
    m += d / static_cast<double>(n);
    m2 += d * (x - m);
  }
  double mean() const { return m; }
  double variance() const { return n < 2 ? 0.0 : m2 / static_cast<double>(n - 1); }
  double standard_error() const { return n > 0 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0; }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Policy advantage

struct AdvantageEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  long samples = 0;
  long clipped = 0;             // samples with at least one clipped importance ratio
  bool low_confidence = false;  // every sample clipped
};

/// Off-policy estimate of the entropy-regularized policy advantage of `referential` over `current`:
/// mean of (pi~(a|s) - pi(a|s)) / pi_t(a|s) * min_x Q_x(s, a) + alpha (H(pi~(.|s)) - H(pi(.|s))).
/// Each ratio is capped at `w_max`. Both entropies at a state share one noise stream.
/// `samples` elements expose `.s`, `.a` and `.behavior_logp`.
template <PolicyModel P, class Critic, class Samples>
  requires CriticModel<Critic, P>
AdvantageEstimate estimate_policy_advantage(const P& current, const P& referential, const Critic& critic, double alpha,
                                            const Samples& samples, Rng& rng, int entropy_samples,
                                            double w_max = 20.0) {
  detail::RunningMean acc;
  AdvantageEstimate out;
  for (const auto& x : samples) {
    if (!std::isfinite(x.behavior_logp)) throw std::invalid_argument("estimate_policy_advantage: non-finite behavior log-prob");
    double r_ref = std::exp(referential.logprob(x.s, x.a) - x.behavior_logp);
    double r_cur = std::exp(current.logprob(x.s, x.a) - x.behavior_logp);
    if (r_ref > w_max || r_cur > w_max) {
      r_ref = std::min(r_ref, w_max);
      r_cur = std::min(r_cur, w_max);
      ++out.clipped;
    }
    double term = (r_ref - r_cur) * critic.min_q(x.s, x.a);
    Rng shared = fork(rng);
    if (alpha != 0.0) {
      Rng e1 = shared, e2 = shared;
      term += alpha * (referential.entropy(x.s, entropy_samples, e1) - current.entropy(x.s, entropy_samples, e2));
    }
    acc.add(term);
  }
  if (acc.n == 0) throw std::invalid_argument("estimate_policy_advantage: need at least one sample");
  out.value = acc.mean();
  out.standard_error = acc.standard_error();
  out.samples = acc.n;
  out.low_confidence = out.clipped == acc.n;
  return out;
}

// ---------------------------------------------------------------------------
// Fisher information

/// Monte Carlo FIM: mean of g g^T (full) or g_bar g_bar^T (batch_average), g = d log pi(a|s)/d theta,
/// with n_actions fresh actions per state drawn from `policy`.
template <PolicyModel P, class States>
Eigen::MatrixXd estimate_fim(const P& policy, const States& states, int n_actions, Rng& rng,
                             FimMode mode = FimMode::full) {
  if (n_actions < 1) throw std::invalid_argument("estimate_fim: n_actions must be >= 1");
  Eigen::MatrixXd fim;
  Eigen::VectorXd g_sum;
  long count = 0;
  for (const auto& s : states) {
    for (int k = 0; k < n_actions; ++k) {
      const Eigen::VectorXd g = policy.score(s, policy.sample(s, rng));
      if (count == 0) {
        fim = Eigen::MatrixXd::Zero(g.size(), g.size());
        g_sum = Eigen::VectorXd::Zero(g.size());
      }
      if (mode == FimMode::full) fim.selfadjointView<Eigen::Lower>().rankUpdate(g);
      g_sum += g;
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("estimate_fim: need at least one state");
  if (mode == FimMode::full) {
    fim = fim.selfadjointView<Eigen::Lower>();
    fim /= static_cast<double>(count);
  } else {
    const Eigen::VectorXd g_bar = g_sum / static_cast<double>(count);
    fim = g_bar * g_bar.transpose();
  }
  return fim;
}

/// delta^T F delta without forming F: mean (g.delta)^2 (full) or (g_bar.delta)^2 (batch_average).
template <PolicyModel P, class States>
double fim_quadratic_form(const P& policy, const States& states, int n_actions, Rng& rng, FimMode mode,
                          const Eigen::VectorXd& delta) {
  if (n_actions < 1) throw std::invalid_argument("fim_quadratic_form: n_actions must be >= 1");
  double sum_sq = 0.0;
  double sum = 0.0;
  long count = 0;
  for (const auto& s : states) {
    for (int k = 0; k < n_actions; ++k) {
      const double proj = policy.score(s, policy.sample(s, rng)).dot(delta);
      sum_sq += proj * proj;
      sum += proj;
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("fim_quadratic_form: need at least one state");
  const double n = static_cast<double>(count);
  return mode == FimMode::full ? sum_sq / n : (sum / n) * (sum / n);
}

// ---------------------------------------------------------------------------
// epsilon: max over states of |E_{a~pi~}[A_pi(s, a) + alpha H(pi~(.|s))]|

struct EpsilonEstimate {
  double value = 0.0;
  std::vector<double> per_state;
  std::vector<double> per_state_se;
};

/// Per state, E_{a~pi~}[Q(s,a) - alpha log pi~(a|s)] - V(s) with V(s) = E_{a~pi}[Q(s,a) - alpha log pi(a|s)],
/// both by Monte Carlo (n_actions from pi~, n_value from pi). Returns the batch maximum of |.|.
template <PolicyModel P, class Critic, class States>
  requires CriticModel<Critic, P>
EpsilonEstimate estimate_epsilon(const P& current, const P& referential, const Critic& critic, double alpha,
                                 const States& states, Rng& rng, int n_actions, int n_value = 8) {
  if (n_actions < 1 || n_value < 1) throw std::invalid_argument("estimate_epsilon: sample counts must be >= 1");
  EpsilonEstimate out;
  for (const auto& s : states) {
    detail::RunningMean ref, cur;
    for (int k = 0; k < n_actions; ++k) {
      const auto a = referential.sample(s, rng);
      ref.add(critic.min_q(s, a) - alpha * referential.logprob(s, a));
    }
    for (int k = 0; k < n_value; ++k) {
      const auto a = current.sample(s, rng);
      cur.add(critic.min_q(s, a) - alpha * current.logprob(s, a));
    }
    const double v = ref.mean() - cur.mean();
    out.per_state.push_back(v);
    out.per_state_se.push_back(std::sqrt(ref.standard_error() * ref.standard_error() +
                                         cur.standard_error() * cur.standard_error()));
    out.value = std::max(out.value, std::abs(v));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mixture metric

inline constexpr double kUnboundedZeta = std::numeric_limits<double>::infinity();

/// C = 2 eps gamma / (1 - gamma)^2.
inline double penalty_constant(double epsilon, double gamma) {
  return 2.0 * epsilon * gamma / ((1.0 - gamma) * (1.0 - gamma));
}

/// sqrt(2 A / (C q)); +infinity when C q < 1e-12.
inline double zeta_upper_bound(double advantage, double epsilon, double gamma, double quad_form) {
  if (!(advantage > 0.0)) throw std::invalid_argument("zeta_upper_bound: advantage must be positive");
  const double cq = penalty_constant(epsilon, gamma) * quad_form;
  if (cq < 1e-12) return kUnboundedZeta;
  return std::sqrt(2.0 * advantage / cq);
}

inline double zeta_upper_bound(double advantage, double epsilon, double gamma, const Eigen::VectorXd& delta,
                               const Eigen::MatrixXd& fim) {
  return zeta_upper_bound(advantage, epsilon, gamma, delta.dot(fim * delta));
}

/// theta + zeta (theta~ - theta).
inline Eigen::VectorXd mix_parameters(const Eigen::VectorXd& theta, const Eigen::VectorXd& referential, double zeta) {
  if (theta.size() != referential.size()) throw std::invalid_argument("mix_parameters: length mismatch");
  if (!(zeta >= 0.0 && zeta <= 1.0)) throw std::invalid_argument("mix_parameters: zeta outside [0, 1]");
  return theta + zeta * (referential - theta);
}

}  // namespace rsm::mixture
