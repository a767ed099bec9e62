#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsm/envs/ring.hpp"
#include "rsm/gossip/gossip.hpp"
#include "rsm/mixture/comm_mix.hpp"
#include "rsm/sac/agent.hpp"

namespace rsm::harness {

enum class MixMode { rsm, avg, none };

inline MixMode parse_mode(const std::string& s) {
  if (s == "rsm") return MixMode::rsm;
  if (s == "avg") return MixMode::avg;
  if (s == "none") return MixMode::none;
  throw std::invalid_argument("unknown mode '" + s + "' (expected rsm, avg or none)");
}

inline const char* to_string(MixMode m) {
  switch (m) {
    case MixMode::rsm: return "rsm";
    case MixMode::avg: return "avg";
    case MixMode::none: return "none";
  }
  return "?";
}

struct RunConfig {
  std::string env = "ring";
  envs::RingConfig ring;
  double comm_range = 90.0;
  int epochs = 200;
  int eval_interval = 10;
  int eval_episodes = 1;
  sac::SacConfig sac;
  mixture::MixConfig mix;
  int comm_interval = 8;  // U, policy updates between rounds
  gossip::RoundConfig round;
  MixMode mode = MixMode::rsm;
  std::uint64_t seed = 0;
  std::string output_dir;  // empty: keep results in memory only
  bool wall_clock = false;

  void validate() const {
    if (env != "ring") throw std::invalid_argument("unknown env '" + env + "'");
    ring.validate();
    if (epochs < 1 || eval_interval < 1 || eval_episodes < 1)
      throw std::invalid_argument("epochs, eval_interval and eval_episodes must be >= 1");
    if (comm_interval < 1) throw std::invalid_argument("comm_interval must be >= 1");
    if (round.segments < 1 || round.replicas < 0) throw std::invalid_argument("segments >= 1 and replicas >= 0");
    if (!(round.prr >= 0.0 && round.prr <= 1.0)) throw std::invalid_argument("prr must be in [0, 1]");
    if (sac.batch_size < 1 || sac.buffer_capacity < sac.batch_size)
      throw std::invalid_argument("need 1 <= batch_size <= buffer_capacity");
    if (!(sac.gamma > 0.0 && sac.gamma < 1.0)) throw std::invalid_argument("gamma must be in (0, 1)");
    if (!(sac.tau >= 0.0 && sac.tau <= 1.0)) throw std::invalid_argument("tau must be in [0, 1]");
    if (sac.hidden.empty()) throw std::invalid_argument("hidden needs at least one layer");
    if (mix.samples < 1 || mix.entropy_samples < 1 || mix.fim_actions < 1 || mix.epsilon_actions < 1 ||
        mix.value_actions < 1)
      throw std::invalid_argument("mixing sample counts must be >= 1");
    if (!(mix.zeta_cap > 0.0 && mix.zeta_cap <= 1.0)) throw std::invalid_argument("zeta_cap must be in (0, 1]");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  T out{};
  in >> out;
  if (in.fail() || !(in >> std::ws).eof()) throw std::invalid_argument("config key '" + key + "': bad value '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw std::invalid_argument("config key '" + key + "': bad boolean '" + v + "'");
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, trim(item)));
  if (out.empty()) throw std::invalid_argument("config key '" + key + "': empty list");
  return out;
}

}  // namespace detail

using Setter = std::function<void(RunConfig&, const std::string&)>;

/// Every recognised key with its setter.
inline const std::map<std::string, Setter>& config_keys() {
  using detail::parse_bool;
  using detail::parse_number;
  static const std::map<std::string, Setter> keys = [] {
    std::map<std::string, Setter> k;
#define RSM_NUM(name, field, type) \
  k[name] = [](RunConfig& c, const std::string& v) { c.field = parse_number<type>(name, v); }
    k["env"] = [](RunConfig& c, const std::string& v) { c.env = v; };
    RSM_NUM("agents", ring.vehicles, int);
    RSM_NUM("circumference", ring.circumference, double);
    RSM_NUM("dt", ring.dt, double);
    RSM_NUM("a_max", ring.a_max, double);
    RSM_NUM("v_desired", ring.v_desired, double);
    RSM_NUM("v_limit", ring.v_limit, double);
    RSM_NUM("gap_min", ring.gap_min, double);
    RSM_NUM("horizon", ring.horizon, int);
    RSM_NUM("init_jitter", ring.init_jitter, double);
    RSM_NUM("init_speed_max", ring.init_speed_max, double);
    RSM_NUM("comm_range", comm_range, double);
    RSM_NUM("epochs", epochs, int);
    RSM_NUM("eval_interval", eval_interval, int);
    RSM_NUM("eval_episodes", eval_episodes, int);
    k["hidden"] = [](RunConfig& c, const std::string& v) { c.sac.hidden = detail::parse_int_list("hidden", v); };
    RSM_NUM("buffer_capacity", sac.buffer_capacity, std::size_t);
    RSM_NUM("batch_size", sac.batch_size, std::size_t);
    RSM_NUM("lr_policy", sac.lr_policy, double);
    RSM_NUM("lr_critic", sac.lr_critic, double);
    RSM_NUM("lr_alpha", sac.lr_alpha, double);
    RSM_NUM("gamma", sac.gamma, double);
    RSM_NUM("tau", sac.tau, double);
    RSM_NUM("delay", sac.delay, int);
    k["target_entropy"] = [](RunConfig& c, const std::string& v) {
      if (v == "auto") c.sac.target_entropy.reset();
      else c.sac.target_entropy = parse_number<double>("target_entropy", v);
    };
    RSM_NUM("init_alpha", sac.init_alpha, double);
    k["optimizer"] = [](RunConfig& c, const std::string& v) { c.sac.optimizer = nn::parse_optimizer(v); };
    RSM_NUM("grad_clip", sac.grad_clip, double);
    RSM_NUM("mix_samples", mix.samples, int);
    RSM_NUM("entropy_samples", mix.entropy_samples, int);
    RSM_NUM("fim_actions", mix.fim_actions, int);
    RSM_NUM("epsilon_actions", mix.epsilon_actions, int);
    RSM_NUM("value_actions", mix.value_actions, int);
    RSM_NUM("c_safety", mix.c_safety, double);
    RSM_NUM("zeta_cap", mix.zeta_cap, double);
    RSM_NUM("w_max", mix.w_max, double);
    RSM_NUM("epsilon_floor", mix.epsilon_floor, double);
    k["fim_mode"] = [](RunConfig& c, const std::string& v) { c.mix.fim_mode = mixture::parse_fim_mode(v); };
    RSM_NUM("comm_interval", comm_interval, int);
    RSM_NUM("segments", round.segments, int);
    RSM_NUM("replicas", round.replicas, int);
    RSM_NUM("prr", round.prr, double);
    RSM_NUM("payload_bytes", round.payload_bytes, std::size_t);
    k["mode"] = [](RunConfig& c, const std::string& v) { c.mode = parse_mode(v); };
    RSM_NUM("seed", seed, std::uint64_t);
    k["output_dir"] = [](RunConfig& c, const std::string& v) { c.output_dir = v; };
    k["wall_clock"] = [](RunConfig& c, const std::string& v) { c.wall_clock = parse_bool("wall_clock", v); };
#undef RSM_NUM
    return k;
  }();
  return keys;
}

inline void set_key(RunConfig& c, const std::string& key, const std::string& value) {
  const auto& keys = config_keys();
  const auto it = keys.find(key);
  if (it == keys.end()) throw std::invalid_argument("unknown config key '" + key + "'");
  it->second(c, value);
}

/// Applies `key = value` lines; '#' starts a comment.
inline void apply_text(RunConfig& c, std::istream& in, const std::string& origin = "<config>") {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": expected key = value");
    try {
      set_key(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline void apply_file(RunConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file '" + path + "'");
  apply_text(c, in, path);
}

inline std::string env_var_name(const std::string& key) {
  std::string name = "RSM_";
  for (char ch : key) name += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return name;
}

/// Overrides any key from the environment variable RSM_<KEY>.
inline void apply_env(RunConfig& c) {
  for (const auto& [key, setter] : config_keys())
    if (const char* v = std::getenv(env_var_name(key).c_str())) setter(c, detail::trim(v));
}

}  // namespace rsm::harness
