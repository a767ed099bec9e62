#pragma once

#include <cmath>
#include <stdexcept>

#include "rsm/envs/tabular_mdp.hpp"

namespace rsm::oracle {

using envs::TabularSoftMdp;

/// pi(a|s) as a |S| x |A| row-stochastic matrix.
using TabularPolicy = Eigen::MatrixXd;

inline void check_policy(const TabularSoftMdp& mdp, const TabularPolicy& pi) {
  if (pi.rows() != mdp.states || pi.cols() != mdp.actions) throw std::invalid_argument("policy shape mismatch");
  if ((pi.array() < 0).any() || ((pi.rowwise().sum().array() - 1.0).abs() > 1e-12).any())
    throw std::invalid_argument("policy rows must lie on the simplex");
}

/// Shannon entropy with 0 log 0 = 0.
inline double entropy(const Eigen::RowVectorXd& p) {
  double h = 0.0;
  for (Eigen::Index j = 0; j < p.size(); ++j)
    if (p[j] > 0.0) h -= p[j] * std::log(p[j]);
  return h;
}

inline Eigen::VectorXd entropies(const TabularPolicy& pi) {
  Eigen::VectorXd h(pi.rows());
  for (Eigen::Index s = 0; s < pi.rows(); ++s) h[s] = entropy(pi.row(s));
  return h;
}

/// P_pi(s, s') = sum_a pi(a|s) P(s'|s,a).
inline Eigen::MatrixXd policy_transition(const TabularSoftMdp& mdp, const TabularPolicy& pi) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(mdp.states, mdp.states);
  for (int a = 0; a < mdp.actions; ++a) p += pi.col(a).asDiagonal() * mdp.transition[a];
  return p;
}

/// Unnormalized discounted visitation sum_t gamma^t Pr(s_t = s); sums to 1/(1-gamma).
inline Eigen::VectorXd visitation(const TabularSoftMdp& mdp, const TabularPolicy& pi) {
  const Eigen::MatrixXd m =
      Eigen::MatrixXd::Identity(mdp.states, mdp.states) - mdp.gamma * policy_transition(mdp, pi).transpose();
  return m.partialPivLu().solve(mdp.rho0);
}

struct SoftEvaluation {
  Eigen::VectorXd V;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd A;
  double eta = 0.0;
  Eigen::VectorXd d_pi;  // unnormalized

  Eigen::VectorXd d_pi_normalized(double gamma) const { return d_pi * (1.0 - gamma); }
};

inline SoftEvaluation soft_policy_evaluation(const TabularSoftMdp& mdp, const TabularPolicy& pi) {
  check_policy(mdp, pi);
  const Eigen::MatrixXd p_pi = policy_transition(mdp, pi);
  const Eigen::VectorXd r_pi = pi.cwiseProduct(mdp.reward).rowwise().sum();
  const Eigen::VectorXd rhs = r_pi + mdp.alpha * entropies(pi);
  const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(mdp.states, mdp.states) - mdp.gamma * p_pi;
  const auto lu = m.partialPivLu();
  if (!(std::abs(lu.determinant()) > 0.0)) throw std::logic_error("soft_policy_evaluation: singular system");
  SoftEvaluation ev;
  ev.V = lu.solve(rhs);
  ev.Q = mdp.reward;
  for (int a = 0; a < mdp.actions; ++a) ev.Q.col(a) += mdp.gamma * mdp.transition[a] * ev.V;
  ev.A = ev.Q.colwise() - ev.V;
  ev.eta = mdp.rho0.dot(ev.V);
  ev.d_pi = visitation(mdp, pi);
  return ev;
}

enum class Measure { normalized, unnormalized };

/// Per-state E_{a~pi~}[A_pi(s,a)] + alpha H(pi~(.|s)).
inline Eigen::VectorXd advantage_per_state(const TabularSoftMdp& mdp, const SoftEvaluation& ev,
                                           const TabularPolicy& pi_ref) {
  return pi_ref.cwiseProduct(ev.A).rowwise().sum() + mdp.alpha * entropies(pi_ref);
}

/// Policy advantage of pi~ over pi under the discounted visitation of pi.
inline double exact_policy_advantage(const TabularSoftMdp& mdp, const TabularPolicy& pi, const TabularPolicy& pi_ref,
                                     Measure measure = Measure::normalized) {
  check_policy(mdp, pi_ref);
  const auto ev = soft_policy_evaluation(mdp, pi);
  const Eigen::VectorXd d = measure == Measure::normalized ? ev.d_pi_normalized(mdp.gamma) : ev.d_pi;
  return d.dot(advantage_per_state(mdp, ev, pi_ref));
}

/// max_s |E_{a~pi~}[A_pi(s,a)] + alpha H(pi~(.|s))|.
inline double exact_epsilon(const TabularSoftMdp& mdp, const TabularPolicy& pi, const TabularPolicy& pi_ref) {
  return advantage_per_state(mdp, soft_policy_evaluation(mdp, pi), pi_ref).cwiseAbs().maxCoeff();
}

/// (1 - beta) pi + beta pi~.
inline TabularPolicy mix_distributions(const TabularPolicy& pi, const TabularPolicy& pi_ref, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("mix_distributions: beta outside [0, 1]");
  if (pi.rows() != pi_ref.rows() || pi.cols() != pi_ref.cols()) throw std::invalid_argument("mix_distributions: shape");
  return (1.0 - beta) * pi + beta * pi_ref;
}

/// beta sum p log(p/m) + (1-beta) sum q log(q/m), m = beta p + (1-beta) q.
inline double js_beta(const Eigen::RowVectorXd& p, const Eigen::RowVectorXd& q, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("js_beta: beta outside [0, 1]");
  double out = 0.0;
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    const double m = beta * p[j] + (1.0 - beta) * q[j];
    if (beta > 0.0 && p[j] > 0.0) out += beta * p[j] * std::log(p[j] / m);
    if (beta < 1.0 && q[j] > 0.0) out += (1.0 - beta) * q[j] * std::log(q[j] / m);
  }
  return out;
}

/// Row-wise softmax of a logit table.
inline TabularPolicy softmax_policy(const Eigen::MatrixXd& logits) {
  TabularPolicy pi(logits.rows(), logits.cols());
  for (Eigen::Index s = 0; s < logits.rows(); ++s) {
    const Eigen::RowVectorXd z = (logits.row(s).array() - logits.row(s).maxCoeff()).exp();
    pi.row(s) = z / z.sum();
  }
  return pi;
}

/// pi_new(.|s) proportional to exp(Q(s,.)/alpha); the greedy argmax (ties to the lowest index) at alpha = 0.
inline TabularPolicy soft_greedy(const Eigen::MatrixXd& q, double alpha) {
  if (alpha > 0.0) return softmax_policy(q / alpha);
  TabularPolicy pi = TabularPolicy::Zero(q.rows(), q.cols());
  for (Eigen::Index s = 0; s < q.rows(); ++s) {
    Eigen::Index best;
    q.row(s).maxCoeff(&best);
    pi(s, best) = 1.0;
  }
  return pi;
}

}  // namespace rsm::oracle
