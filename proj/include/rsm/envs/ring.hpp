#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "rsm/common.hpp"

namespace rsm::envs {

struct RingConfig {
  int vehicles = 4;
  double circumference = 200.0;  // m
  double dt = 0.1;               // s
  double a_max = 3.0;            // m/s^2
  double v_desired = 20.0;       // m/s
  double v_limit = 30.0;         // m/s
  double gap_min = 2.0;          // m
  int horizon = 500;             // T
  double init_jitter = 0.2;      // fraction of the even spacing
  double init_speed_max = 10.0;  // initial speeds ~ U[0, init_speed_max]

  void validate() const {
    if (vehicles < 1) throw std::invalid_argument("ring: need at least one vehicle");
    if (!(circumference > 0 && dt > 0 && a_max >= 0 && v_desired > 0 && v_limit > 0 && gap_min >= 0))
      throw std::invalid_argument("ring: constants must be positive");
    if (horizon < 1) throw std::invalid_argument("ring: horizon must be >= 1");
    if (vehicles > 1 && circumference / vehicles * (1.0 - 2.0 * init_jitter) <= gap_min)
      throw std::invalid_argument("ring: initial spacing leaves no room above gap_min");
  }
};

inline constexpr int kRingObsDim = 6;

/// Vehicles are indexed in ring order: the leader of i is i+1 and its follower i-1 (mod N).
struct RingEnvState {
  std::vector<double> position;  // [0, L)
  std::vector<double> velocity;  // [0, v_limit]
  int step = 0;
};

/// Forward arc distance from vehicle i to its leader.
inline double leader_gap(const RingEnvState& st, int i, double circumference) {
  const int n = static_cast<int>(st.position.size());
  const int lead = (i + 1) % n;
  if (lead == i) return circumference;
  double g = std::fmod(st.position[lead] - st.position[i], circumference);
  if (g < 0) g += circumference;
  return g;
}

inline bool collided(const RingEnvState& st, const RingConfig& cfg) {
  const int n = static_cast<int>(st.position.size());
  if (n < 2) return false;
  for (int i = 0; i < n; ++i)
    if (leader_gap(st, i, cfg.circumference) <= cfg.gap_min) return true;
  return false;
}

inline double ring_reward(const RingEnvState& st, const RingConfig& cfg) {
  double sum = 0.0;
  for (double v : st.velocity) sum += v;
  return sum / static_cast<double>(st.velocity.size()) / cfg.v_desired;
}

struct RingStepResult {
  RingEnvState next;
  std::vector<double> rewards;
  bool collision = false;
  bool done = false;  // collision or horizon
};

/// Semi-implicit Euler step with accelerations in m/s^2, clipped to [-a_max, a_max].
inline RingStepResult ring_step(const RingEnvState& state, const std::vector<double>& accel, const RingConfig& cfg) {
  const std::size_t n = state.position.size();
  if (accel.size() != n || state.velocity.size() != n) throw std::invalid_argument("ring_step: size mismatch");
  RingStepResult out{state, {}, false, false};
  auto& nx = out.next;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = std::clamp(accel[i], -cfg.a_max, cfg.a_max);
    nx.velocity[i] = std::clamp(state.velocity[i] + a * cfg.dt, 0.0, cfg.v_limit);
    double x = std::fmod(state.position[i] + nx.velocity[i] * cfg.dt, cfg.circumference);
    if (x < 0) x += cfg.circumference;
    nx.position[i] = x;
  }
  ++nx.step;
  out.rewards.assign(n, ring_reward(nx, cfg));
  out.collision = collided(nx, cfg);
  out.done = out.collision || nx.step >= cfg.horizon;
  return out;
}

/// (x/L, v/v_limit, leader gap/L, leader v/v_limit, follower gap/L, follower v/v_limit)
inline Eigen::VectorXd ring_observation(const RingEnvState& st, int i, const RingConfig& cfg) {
  const int n = static_cast<int>(st.position.size());
  const int lead = (i + 1) % n;
  const int follow = (i - 1 + n) % n;
  Eigen::VectorXd o(kRingObsDim);
  o << st.position[i] / cfg.circumference, st.velocity[i] / cfg.v_limit,
      leader_gap(st, i, cfg.circumference) / cfg.circumference, st.velocity[lead] / cfg.v_limit,
      leader_gap(st, follow, cfg.circumference) / cfg.circumference, st.velocity[follow] / cfg.v_limit;
  return o;
}

/// Multi-agent ring road; every vehicle is driven by one agent through a tanh action in [-1, 1].
class RingEnv {
 public:
  explicit RingEnv(RingConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

  const RingConfig& config() const { return cfg_; }
  const RingEnvState& state() const { return state_; }
  int agents() const { return cfg_.vehicles; }

  void reset(Rng& rng) {
    const int n = cfg_.vehicles;
    const double spacing = cfg_.circumference / n;
    state_.position.assign(n, 0.0);
    state_.velocity.assign(n, 0.0);
    state_.step = 0;
    for (int i = 0; i < n; ++i) {
      const double jitter = (2.0 * uniform01(rng) - 1.0) * cfg_.init_jitter * spacing;
      double x = std::fmod(i * spacing + jitter, cfg_.circumference);
      if (x < 0) x += cfg_.circumference;
      state_.position[i] = x;
      state_.velocity[i] = uniform01(rng) * std::min(cfg_.init_speed_max, cfg_.v_limit);
    }
  }

  void set_state(RingEnvState st) { state_ = std::move(st); }

  std::vector<Eigen::VectorXd> observations() const {
    std::vector<Eigen::VectorXd> obs;
    for (int i = 0; i < cfg_.vehicles; ++i) obs.push_back(ring_observation(state_, i, cfg_));
    return obs;
  }

  /// `actions` holds one scaled action in [-1, 1] per vehicle (first component is used).
  RingStepResult step(const std::vector<Eigen::VectorXd>& actions) {
    std::vector<double> accel(actions.size());
    for (std::size_t i = 0; i < actions.size(); ++i) accel[i] = actions[i][0] * cfg_.a_max;
    auto result = ring_step(state_, accel, cfg_);
    state_ = result.next;
    return result;
  }

 private:
  RingConfig cfg_;
  RingEnvState state_;
};

}  // namespace rsm::envs
