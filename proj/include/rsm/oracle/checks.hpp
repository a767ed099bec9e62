#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "rsm/oracle/soft_eval.hpp"

namespace rsm::oracle {

struct Tolerances {
  double bound = 1e-9;       // Theorem-1 and corollary inequalities
  double lemma_exact = 1e-10;  // L2, L3
  double lemma5 = 1e-12;
  double lemma4 = 1e-8;
  double lemma1 = 1e-9;
  double taylor_ratio = 0.02;
  double score = 1e-12;
};

inline double penalty_constant(double epsilon, double gamma) {
  return 2.0 * epsilon * gamma / ((1.0 - gamma) * (1.0 - gamma));
}

struct BoundCheck {
  double beta = 0.0;
  double lhs = 0.0;  // eta(pi_mix) - eta(pi)
  double rhs = 0.0;  // unnormalized visitation measure
  bool holds = false;
  double rhs_normalized = 0.0;
  bool holds_normalized = false;
  double advantage = 0.0;  // unnormalized
  double advantage_normalized = 0.0;
  double epsilon = 0.0;
  double c_const = 0.0;
};

namespace detail {

struct PairEval {
  SoftEvaluation ev;
  SoftEvaluation ev_mix;
  TabularPolicy mix;
  Eigen::VectorXd f;  // per-state advantage of pi~ plus its entropy
};

inline PairEval evaluate_pair(const TabularSoftMdp& mdp, const TabularPolicy& pi, const TabularPolicy& pi_ref,
                              double beta) {
  check_policy(mdp, pi_ref);
  PairEval pe;
  pe.ev = soft_policy_evaluation(mdp, pi);
  pe.mix = mix_distributions(pi, pi_ref, beta);
  pe.ev_mix = soft_policy_evaluation(mdp, pe.mix);
  pe.f = advantage_per_state(mdp, pe.ev, pi_ref);
  return pe;
}

}  // namespace detail

/// eta(pi_mix) - eta(pi) >= beta E[A + alpha H(pi~)] - 2 gamma eps beta^2/(1-gamma)^2 + alpha E_{d_mix}[JS_beta].
inline BoundCheck theorem1_check(const TabularSoftMdp& mdp, const TabularPolicy& pi, const TabularPolicy& pi_ref,
                                 double beta, double tol = 1e-9) {
  const auto pe = detail::evaluate_pair(mdp, pi, pi_ref, beta);
  Eigen::VectorXd js(mdp.states);
  for (int s = 0; s < mdp.states; ++s) js[s] = js_beta(pi_ref.row(s), pi.row(s), beta);
  const double norm = 1.0 - mdp.gamma;
  BoundCheck c;
  c.beta = beta;
  c.lhs = pe.ev_mix.eta - pe.ev.eta;
  c.epsilon = pe.f.cwiseAbs().maxCoeff();
  c.c_const = penalty_constant(c.epsilon, mdp.gamma);
  c.advantage = pe.ev.d_pi.dot(pe.f);
  c.advantage_normalized = norm * c.advantage;
  const double penalty = c.c_const * beta * beta;
  c.rhs = beta * c.advantage - penalty + mdp.alpha * pe.ev_mix.d_pi.dot(js);
  c.rhs_normalized = beta * c.advantage_normalized - penalty + mdp.alpha * norm * pe.ev_mix.d_pi.dot(js);
  c.holds = c.lhs >= c.rhs - tol;
  c.holds_normalized = c.lhs >= c.rhs_normalized - tol;
  return c;
}

struct CorollaryCheck : BoundCheck {
  bool positivity_applies = false;  // A > tol (resolvable) and 0 < beta < A / C
  bool positive = false;            // lhs > 0
};

/// eta(pi_mix) - eta(pi) >= beta A - C beta^2, C = 2 eps gamma / (1-gamma)^2.
inline CorollaryCheck corollary1_check(const TabularSoftMdp& mdp, const TabularPolicy& pi,
                                       const TabularPolicy& pi_ref, double beta, double tol = 1e-9) {
  const auto pe = detail::evaluate_pair(mdp, pi, pi_ref, beta);
  CorollaryCheck c;
  c.beta = beta;
  c.lhs = pe.ev_mix.eta - pe.ev.eta;
  c.epsilon = pe.f.cwiseAbs().maxCoeff();
  c.c_const = penalty_constant(c.epsilon, mdp.gamma);
  c.advantage = pe.ev.d_pi.dot(pe.f);
  c.advantage_normalized = (1.0 - mdp.gamma) * c.advantage;
  c.rhs = beta * c.advantage - c.c_const * beta * beta;
  c.rhs_normalized = beta * c.advantage_normalized - c.c_const * beta * beta;
  c.holds = c.lhs >= c.rhs - tol;
  c.holds_normalized = c.lhs >= c.rhs_normalized - tol;
  c.positivity_applies = c.advantage > tol && beta > 0.0 && beta * c.c_const < c.advantage;
  c.positive = c.lhs > 0.0;
  return c;
}

struct LemmaReport {
  double l2_error = 0.0;  // max_s |sum_a pi A + alpha H(pi)|
  double l3_error = 0.0;  // max_s |E_mix[A] - (beta E_pi~[A] - (1-beta) alpha H(pi))|
  double l5_error = 0.0;  // max_s |H(mix) - JS - beta H(pi~) - (1-beta) H(pi)|
  double l4_error = 0.0;  // |eta(mix) - eta(pi) - sum_s d_mix E_mix[A + alpha H(mix)]|, unnormalized d_mix
  double l4_error_normalized = 0.0;
  double l1_min_gap = 0.0;  // min_{s,a} Q_new - Q_old

  bool passes(const Tolerances& tol) const {
    return l2_error <= tol.lemma_exact && l3_error <= tol.lemma_exact && l5_error <= tol.lemma5 &&
           l4_error <= tol.lemma4 && l1_min_gap >= -tol.lemma1;
  }
};

inline double lemma1_min_gap(const TabularSoftMdp& mdp, const TabularPolicy& pi) {
  const auto ev = soft_policy_evaluation(mdp, pi);
  const auto ev_new = soft_policy_evaluation(mdp, soft_greedy(ev.Q, mdp.alpha));
  return (ev_new.Q - ev.Q).minCoeff();
}

inline LemmaReport lemma_checks(const TabularSoftMdp& mdp, const TabularPolicy& pi, const TabularPolicy& pi_ref,
                                double beta) {
  const auto pe = detail::evaluate_pair(mdp, pi, pi_ref, beta);
  const auto& A = pe.ev.A;
  const Eigen::VectorXd h_pi = entropies(pi);
  const Eigen::VectorXd h_ref = entropies(pi_ref);
  const Eigen::VectorXd h_mix = entropies(pe.mix);
  LemmaReport r;
  Eigen::VectorXd inner(mdp.states);
  for (int s = 0; s < mdp.states; ++s) {
    const double e_pi = pi.row(s).dot(A.row(s));
    const double e_ref = pi_ref.row(s).dot(A.row(s));
    const double e_mix = pe.mix.row(s).dot(A.row(s));
    r.l2_error = std::max(r.l2_error, std::abs(e_pi + mdp.alpha * h_pi[s]));
    r.l3_error = std::max(r.l3_error, std::abs(e_mix - (beta * e_ref - (1.0 - beta) * mdp.alpha * h_pi[s])));
    const double js = js_beta(pi_ref.row(s), pi.row(s), beta);
    r.l5_error = std::max(r.l5_error, std::abs(h_mix[s] - js - beta * h_ref[s] - (1.0 - beta) * h_pi[s]));
    inner[s] = e_mix + mdp.alpha * h_mix[s];
  }
  const double diff = pe.ev_mix.eta - pe.ev.eta;
  r.l4_error = std::abs(diff - pe.ev_mix.d_pi.dot(inner));
  r.l4_error_normalized = std::abs(diff - (1.0 - mdp.gamma) * pe.ev_mix.d_pi.dot(inner));
  r.l1_min_gap = lemma1_min_gap(mdp, pi);
  return r;
}

// ---------------------------------------------------------------------------
// KL / Fisher second-order expansion on tabular softmax policies

/// KL(softmax(theta) || softmax(theta + step)) for one state, via log1p/expm1 to keep small steps accurate.
inline double softmax_kl(const Eigen::RowVectorXd& theta, const Eigen::RowVectorXd& step) {
  const Eigen::RowVectorXd p = softmax_policy(theta);
  // log Z(theta + step) - log Z(theta) = log sum_a p_a exp(step_a)
  double acc = 0.0;
  for (Eigen::Index a = 0; a < p.size(); ++a) acc += p[a] * std::expm1(step[a]);
  return std::log1p(acc) - p.dot(step);
}

/// Per-state Fisher matrix of the softmax logits, diag(pi) - pi pi^T.
inline Eigen::MatrixXd softmax_fisher(const Eigen::RowVectorXd& pi) {
  Eigen::MatrixXd f = -pi.transpose() * pi;
  f.diagonal() += pi.transpose();
  return f;
}

/// max_s |sum_a pi(a|s) (e_a - pi(.|s))|, which is zero in exact arithmetic.
inline double score_identity_error(const Eigen::MatrixXd& logits) {
  const TabularPolicy pi = softmax_policy(logits);
  double err = 0.0;
  for (Eigen::Index s = 0; s < pi.rows(); ++s) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(pi.cols());
    for (Eigen::Index a = 0; a < pi.cols(); ++a) {
      Eigen::RowVectorXd g = -pi.row(s);
      g[a] += 1.0;
      mean += pi(s, a) * g;
    }
    err = std::max(err, mean.cwiseAbs().maxCoeff());
  }
  return err;
}

struct TaylorReport {
  std::vector<double> zetas;
  std::vector<double> remainders;  // r(zeta) = max_s |KL_s - zeta^2/2 q_s|
  std::vector<double> ratios;      // r(zeta/10)/r(zeta) for consecutive grid points
  double score_error = 0.0;

  bool passes(const Tolerances& tol) const {
    for (std::size_t i = 0; i < ratios.size(); ++i)
      if (zetas[i] <= 1e-2 + 1e-15 && !(ratios[i] < tol.taylor_ratio)) return false;
    return score_error <= tol.score;
  }
};

/// Remainders for a decreasing-by-10 zeta grid (e.g. {1e-1, 1e-2, 1e-3, 1e-4}).
inline TaylorReport kl_and_fim_taylor_check(const Eigen::MatrixXd& logits, const Eigen::MatrixXd& delta,
                                            const std::vector<double>& zetas) {
  TaylorReport rep;
  rep.zetas = zetas;
  const TabularPolicy pi = softmax_policy(logits);
  for (double z : zetas) {
    double r = 0.0;
    for (Eigen::Index s = 0; s < logits.rows(); ++s) {
      const double q = delta.row(s) * softmax_fisher(pi.row(s)) * delta.row(s).transpose();
      r = std::max(r, std::abs(softmax_kl(logits.row(s), z * delta.row(s)) - 0.5 * z * z * q));
    }
    rep.remainders.push_back(r);
  }
  for (std::size_t i = 0; i + 1 < zetas.size(); ++i)
    rep.ratios.push_back(rep.remainders[i] > 0.0 ? rep.remainders[i + 1] / rep.remainders[i] : 0.0);
  rep.score_error = score_identity_error(logits);
  return rep;
}

}  // namespace rsm::oracle
