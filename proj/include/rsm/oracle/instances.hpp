#pragma once

#include <array>
#include <cstdint>

#include "rsm/common.hpp"
#include "rsm/envs/tabular_mdp.hpp"
#include "rsm/oracle/soft_eval.hpp"

namespace rsm::oracle {

inline constexpr std::array<double, 3> kSweepAlphas{0.0, 0.1, 1.0};
inline constexpr std::array<double, 3> kSweepGammas{0.5, 0.9, 0.99};

enum class ReferentialKind { random, soft_greedy, perturbed, sparse };

inline const char* to_string(ReferentialKind k) {
  switch (k) {
    case ReferentialKind::random: return "random";
    case ReferentialKind::soft_greedy: return "soft_greedy";
    case ReferentialKind::perturbed: return "perturbed";
    case ReferentialKind::sparse: return "sparse";
  }
  return "?";
}

/// One (MDP, pi, pi~) triple. The MDP is regenerated from its seed; the policies are stored.
struct TheoryInstance {
  std::uint64_t mdp_seed = 0;
  int states = 2;
  int actions = 2;
  double gamma = 0.9;
  double alpha = 0.0;
  double r_max = 1.0;
  ReferentialKind kind = ReferentialKind::random;
  TabularPolicy pi;
  TabularPolicy pi_ref;

  envs::TabularSoftMdp mdp() const { return envs::make_tabular(mdp_seed, states, actions, gamma, alpha, r_max); }
};

/// Instance `index` of the sweep rooted at `seed`; (alpha, gamma) cycle over the 3x3 grid
/// and the referential construction cycles over the four kinds.
inline TheoryInstance make_instance(std::uint64_t seed, std::uint64_t index) {
  Rng rng = stream(seed, index);
  TheoryInstance inst;
  inst.mdp_seed = rng();
  inst.states = 2 + static_cast<int>(rng() % 4);   // 2..5
  inst.actions = 1 + static_cast<int>(rng() % 4);  // 1..4
  inst.alpha = kSweepAlphas[index % 3];
  inst.gamma = kSweepGammas[(index / 3) % 3];
  inst.kind = static_cast<ReferentialKind>((index / 9) % 4);
  const auto mdp = inst.mdp();

  const double scale = 0.5 + 2.5 * uniform01(rng);
  const Eigen::MatrixXd logits = scale * standard_normal(inst.states, inst.actions, rng);
  inst.pi = softmax_policy(logits);
  switch (inst.kind) {
    case ReferentialKind::random:
      inst.pi_ref = softmax_policy(scale * standard_normal(inst.states, inst.actions, rng));
      break;
    case ReferentialKind::soft_greedy:
      inst.pi_ref = soft_greedy(soft_policy_evaluation(mdp, inst.pi).Q, inst.alpha);
      break;
    case ReferentialKind::perturbed:
      inst.pi_ref = softmax_policy(logits + 0.3 * standard_normal(inst.states, inst.actions, rng));
      break;
    case ReferentialKind::sparse: {
      Eigen::MatrixXd l = scale * standard_normal(inst.states, inst.actions, rng);
      inst.pi_ref = softmax_policy(l);
      for (int s = 0; s < inst.states; ++s) {
        const int zero = static_cast<int>(rng() % static_cast<std::uint64_t>(inst.actions));
        if (inst.actions > 1) inst.pi_ref(s, zero) = 0.0;
        inst.pi_ref.row(s) /= inst.pi_ref.row(s).sum();
      }
      break;
    }
  }
  return inst;
}

}  // namespace rsm::oracle
