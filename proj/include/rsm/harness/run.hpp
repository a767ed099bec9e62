#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "rsm/envs/ring.hpp"
#include "rsm/gossip/gossip.hpp"
#include "rsm/harness/config.hpp"
#include "rsm/mixture/comm_mix.hpp"
#include "rsm/sac/agent.hpp"

namespace rsm::harness {

struct MetricsRow {
  int epoch = 0;
  std::vector<double> agent_reward;  // greedy evaluation, one per agent
  double mean_reward = 0.0;
  double train_reward = 0.0;  // mean per-step reward over the epoch's training steps
  int collisions = 0;         // during training in this epoch
  std::int64_t rho_total = 0;
  std::int64_t rho_ef = 0;
  double rho_r = 0.0;
  double psi_gb = 0.0;
  std::int64_t messages = 0;
  std::int64_t mix_evaluations = 0;  // cumulative MixDecision count
  double mean_zeta = 0.0;            // over accepted mixes so far
  double mean_advantage = 0.0;       // over evaluated replicas so far (rsm only)
  std::int64_t rejections = 0;
  bool diverged = false;
  double wall_clock_s = 0.0;
};

struct DecisionRecord {
  int epoch = 0;
  int step = 0;
  int agent = 0;
  int replica = 0;
  mixture::MixDecision decision;
};

struct RunResult {
  std::vector<MetricsRow> rows;
  std::vector<DecisionRecord> decisions;
  gossip::CommLedger ledger;
  std::vector<nn::ParamVector> final_policies;
  bool diverged = false;
  std::string divergence_message;
  std::size_t policy_params = 0;
};

namespace detail {

inline std::string fmt(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream o;
  o << std::setprecision(10) << v;
  return o.str();
}

class CsvSink {
 public:
  CsvSink() = default;
  explicit CsvSink(const std::filesystem::path& path) : out_(path) {
    if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  bool open() const { return out_.is_open(); }
  void line(const std::vector<std::string>& cells) {
    if (!out_.is_open()) return;
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

inline std::vector<std::string> metrics_header(int agents, bool wall_clock) {
  std::vector<std::string> h{"epoch", "reward_mean"};
  for (int i = 0; i < agents; ++i) h.push_back("reward_agent" + std::to_string(i));
  for (const char* c : {"train_reward", "collisions", "rho_total", "rho_ef", "rho_r", "psi_gb", "messages",
                        "mix_evaluations", "mean_zeta", "mean_advantage", "rejections", "diverged"})
    h.emplace_back(c);
  if (wall_clock) h.emplace_back("wall_clock_s");
  return h;
}

inline std::vector<std::string> metrics_cells(const MetricsRow& r, bool wall_clock) {
  std::vector<std::string> c{std::to_string(r.epoch), fmt(r.mean_reward)};
  for (double v : r.agent_reward) c.push_back(fmt(v));
  c.push_back(fmt(r.train_reward));
  c.push_back(std::to_string(r.collisions));
  c.push_back(std::to_string(r.rho_total));
  c.push_back(std::to_string(r.rho_ef));
  c.push_back(fmt(r.rho_r));
  c.push_back(fmt(r.psi_gb));
  c.push_back(std::to_string(r.messages));
  c.push_back(std::to_string(r.mix_evaluations));
  c.push_back(fmt(r.mean_zeta));
  c.push_back(fmt(r.mean_advantage));
  c.push_back(std::to_string(r.rejections));
  c.push_back(r.diverged ? "1" : "0");
  if (wall_clock) c.push_back(fmt(r.wall_clock_s));
  return c;
}

inline const std::vector<std::string>& decisions_header() {
  static const std::vector<std::string> h{"epoch",    "step",     "agent",      "replica",    "advantage",
                                          "advantage_se", "epsilon", "c_const", "quad_form", "zeta_bound",
                                          "zeta_used", "accepted", "clipped", "low_confidence"};
  return h;
}

inline std::vector<std::string> decision_cells(const DecisionRecord& r) {
  const auto& d = r.decision;
  return {std::to_string(r.epoch), std::to_string(r.step), std::to_string(r.agent), std::to_string(r.replica),
          fmt(d.advantage),       fmt(d.advantage_se),   fmt(d.epsilon),        fmt(d.c_const),
          fmt(d.quad_form),       std::isinf(d.zeta_bound) ? "inf" : fmt(d.zeta_bound), fmt(d.zeta_used),
          d.accepted ? "1" : "0", std::to_string(d.clipped), d.low_confidence ? "1" : "0"};
}

}  // namespace detail

/// Greedy rollout where agent `driver`'s deterministic policy controls every vehicle.
/// Returns the summed reward divided by the horizon; steps after a collision count as zero.
inline double evaluate_policy(const sac::AgentState& driver, const envs::RingConfig& ring, Rng rng,
                              int episodes = 1) {
  double total = 0.0;
  for (int ep = 0; ep < episodes; ++ep) {
    envs::RingEnv env(ring);
    env.reset(rng);
    for (int t = 0; t < ring.horizon; ++t) {
      std::vector<Eigen::VectorXd> actions;
      for (const auto& o : env.observations()) actions.push_back(sac::act_greedy(driver, o));
      const auto res = env.step(actions);
      total += res.rewards[0];
      if (res.collision) break;
    }
  }
  return total / (static_cast<double>(ring.horizon) * episodes);
}

/// Independent learning with communication rounds every `comm_interval` policy updates.
inline RunResult run(const RunConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const int n = cfg.ring.vehicles;
  RunResult result;

  Rng init_rng = stream(cfg.seed, 0);
  Rng env_rng = stream(cfg.seed, 1);
  Rng comm_rng = stream(cfg.seed, 2);
  std::vector<Rng> agent_rng, mix_rng;
  std::vector<sac::AgentState> agents;
  for (int i = 0; i < n; ++i) {
    agent_rng.push_back(stream(cfg.seed, 100 + static_cast<std::uint64_t>(i)));
    mix_rng.push_back(stream(cfg.seed, 200 + static_cast<std::uint64_t>(i)));
    agents.push_back(sac::make_agent(envs::kRingObsDim, 1, cfg.sac, init_rng));
  }
  result.policy_params = static_cast<std::size_t>(agents[0].theta.size());

  detail::CsvSink metrics_out, decisions_out;
  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    metrics_out = detail::CsvSink(std::filesystem::path(cfg.output_dir) / "metrics.csv");
    decisions_out = detail::CsvSink(std::filesystem::path(cfg.output_dir) / "decisions.csv");
    metrics_out.line(detail::metrics_header(n, cfg.wall_clock));
    decisions_out.line(detail::decisions_header());
  }

  auto& ledger = result.ledger;
  double zeta_sum = 0.0, advantage_sum = 0.0;
  std::int64_t advantage_count = 0, rejections = 0;

  auto comm_round = [&](const std::vector<int>& requesters, const envs::RingEnv& env, int epoch, int step) {
    std::vector<nn::ParamVector> snapshots;
    for (const auto& a : agents) snapshots.push_back(a.theta);
    const auto graph = gossip::ring_neighbors(env.state().position, cfg.ring.circumference, cfg.comm_range);
    const auto refs = gossip::run_comm_round(snapshots, graph, requesters, cfg.round, comm_rng, ledger);
    for (int i : requesters) {
      const auto& mine = refs[static_cast<std::size_t>(i)];
      if (mine.empty()) continue;
      auto& agent = agents[static_cast<std::size_t>(i)];
      if (cfg.mode == MixMode::rsm) {
        std::vector<nn::ParamVector> thetas;
        for (const auto& r : mine) thetas.push_back(r.theta);
        auto mixed = mixture::comm_mix(agent, thetas, cfg.mix, mix_rng[static_cast<std::size_t>(i)]);
        agent.theta = std::move(mixed.theta);
        for (std::size_t r = 0; r < mixed.decisions.size(); ++r) {
          const auto& d = mixed.decisions[r];
          advantage_sum += d.advantage;
          ++advantage_count;
          if (d.accepted) {
            ++ledger.rho_ef;
            zeta_sum += d.zeta_used;
          } else {
            ++rejections;
          }
          result.decisions.push_back({epoch, step, i, static_cast<int>(r), d});
          decisions_out.line(detail::decision_cells(result.decisions.back()));
        }
      } else {
        nn::ParamVector mean = nn::ParamVector::Zero(agent.theta.size());
        for (const auto& r : mine) mean += r.theta;
        mean /= static_cast<double>(mine.size());
        const double zeta = 1.0 - 1.0 / (static_cast<double>(graph.degree(i)) + 1.0);
        agent.theta = mixture::mix_parameters(agent.theta, mean, zeta);
        for (std::size_t r = 0; r < mine.size(); ++r) {
          mixture::MixDecision d;
          d.advantage = d.advantage_se = d.epsilon = d.c_const = d.quad_form = d.zeta_bound =
              std::numeric_limits<double>::quiet_NaN();
          d.zeta_used = zeta;
          d.accepted = true;
          ++ledger.rho_ef;
          zeta_sum += zeta;
          result.decisions.push_back({epoch, step, i, static_cast<int>(r), d});
          decisions_out.line(detail::decision_cells(result.decisions.back()));
        }
      }
    }
  };

  envs::RingEnv env(cfg.ring);
  try {
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
      env.reset(env_rng);
      auto obs = env.observations();
      double reward_sum = 0.0;
      int collisions = 0;
      for (int t = 1; t <= cfg.ring.horizon; ++t) {
        std::vector<nn::ActionSample> samples;
        std::vector<Eigen::VectorXd> actions;
        for (int i = 0; i < n; ++i) {
          samples.push_back(sac::act(agents[i], obs[i], agent_rng[i]));
          actions.push_back(samples.back().action);
        }
        const auto res = env.step(actions);
        const auto next_obs = env.observations();
        reward_sum += res.rewards[0];
        const bool episode_end = res.collision || t == cfg.ring.horizon;
        std::vector<int> requesters;
        for (int i = 0; i < n; ++i) {
          sac::Transition tr{obs[i], samples[i].action, res.rewards[i], next_obs[i], samples[i].logp, res.collision};
          const auto report = sac::learn(agents[i], std::move(tr), episode_end, agent_rng[i]);
          if (report.policy_updated && agents[i].policy_updates % cfg.comm_interval == 0) requesters.push_back(i);
        }
        if (cfg.mode != MixMode::none && !requesters.empty()) comm_round(requesters, env, epoch, t);
        if (res.collision) {
          ++collisions;
          env.reset(env_rng);
          obs = env.observations();
        } else {
          obs = next_obs;
        }
      }

      if (epoch % cfg.eval_interval == 0 || epoch == cfg.epochs) {
        MetricsRow row;
        row.epoch = epoch;
        for (int i = 0; i < n; ++i)
          row.agent_reward.push_back(evaluate_policy(agents[i], cfg.ring, stream(cfg.seed, 1000000 + epoch), cfg.eval_episodes));
        double s = 0.0;
        for (double v : row.agent_reward) s += v;
        row.mean_reward = s / n;
        row.train_reward = reward_sum / cfg.ring.horizon;
        row.collisions = collisions;
        row.rho_total = ledger.rho_total;
        row.rho_ef = ledger.rho_ef;
        row.rho_r = ledger.mixing_rate();
        const auto cost = gossip::comm_cost(ledger, result.policy_params);
        row.psi_gb = cost.psi_gb;
        row.messages = cost.messages;
        row.mix_evaluations = static_cast<std::int64_t>(result.decisions.size());
        row.mean_zeta = ledger.rho_ef > 0 ? zeta_sum / static_cast<double>(ledger.rho_ef) : 0.0;
        row.mean_advantage = advantage_count > 0 ? advantage_sum / static_cast<double>(advantage_count) : 0.0;
        row.rejections = rejections;
        row.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.rows.push_back(row);
        metrics_out.line(detail::metrics_cells(row, cfg.wall_clock));
      }
    }
  } catch (const sac::DivergenceError& e) {
    result.diverged = true;
    result.divergence_message = e.what();
    MetricsRow row;
    row.epoch = result.rows.empty() ? 0 : result.rows.back().epoch;
    row.agent_reward.assign(static_cast<std::size_t>(n), std::numeric_limits<double>::quiet_NaN());
    row.mean_reward = row.train_reward = std::numeric_limits<double>::quiet_NaN();
    row.rho_total = ledger.rho_total;
    row.rho_ef = ledger.rho_ef;
    row.rho_r = ledger.mixing_rate();
    row.diverged = true;
    result.rows.push_back(row);
    metrics_out.line(detail::metrics_cells(row, cfg.wall_clock));
  }
  for (const auto& a : agents) result.final_policies.push_back(a.theta);
  return result;
}

}  // namespace rsm::harness
