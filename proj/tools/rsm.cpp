#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rsm/harness/bench_comm.hpp"
#include "rsm/harness/config.hpp"
#include "rsm/harness/run.hpp"
#include "rsm/harness/verify_theory.hpp"

namespace {

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides, const std::string& mode,
              const std::string& output, std::int64_t seed) {
  rsm::harness::RunConfig cfg;
  if (!config_path.empty()) rsm::harness::apply_file(cfg, config_path);
  rsm::harness::apply_env(cfg);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    rsm::harness::set_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!mode.empty()) cfg.mode = rsm::harness::parse_mode(mode);
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  if (!output.empty()) cfg.output_dir = output;
  if (cfg.output_dir.empty()) cfg.output_dir = "out";

  const auto result = rsm::harness::run(cfg);
  const auto& last = result.rows.back();
  std::cout << "mode=" << rsm::harness::to_string(cfg.mode) << " seed=" << cfg.seed << " epochs=" << last.epoch
            << " reward=" << last.mean_reward << " rho_total=" << result.ledger.rho_total
            << " rho_ef=" << result.ledger.rho_ef << " rho_r=" << result.ledger.mixing_rate()
            << " psi_gb=" << last.psi_gb << "\nwrote " << cfg.output_dir << "/metrics.csv and decisions.csv\n";
  if (result.diverged) {
    std::cerr << "run diverged: " << result.divergence_message << '\n';
    return 2;
  }
  return 0;
}

int cmd_replay(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  const auto f = rsm::harness::failing_case_from_json(nlohmann::json::parse(in));
  const auto sides = rsm::harness::evaluate_check(f);
  std::cout << std::setprecision(17) << "check=" << f.check << " lhs=" << sides.lhs << " rhs=" << sides.rhs
            << " (recorded lhs=" << f.lhs << " rhs=" << f.rhs << ")\n";
  return sides.lhs == f.lhs && sides.rhs == f.rhs ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regulated segment mixture for multi-agent soft actor-critic"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Run multi-agent training and write metrics.csv / decisions.csv");
  std::string config_path, mode, output;
  std::vector<std::string> overrides;
  std::int64_t train_seed = -1;
  train->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
  train->add_option("--seed", train_seed, "Override the seed");
  train->add_option("--mode", mode, "Mixing mode")->check(CLI::IsMember({"rsm", "avg", "none"}));
  train->add_option("--output", output, "Output directory (default: config output_dir, else ./out)");
  train->add_option("--set", overrides, "Extra key=value overrides, applied after the file and environment");

  auto* verify = app.add_subcommand("verify-theory", "Exact tabular checks of the improvement bounds and lemmas");
  rsm::harness::TheoryConfig tcfg;
  std::int64_t verify_seed = 0;
  std::string replay;
  verify->add_option("--instances", tcfg.instances, "Random (MDP, pi, pi~) triples")->capture_default_str();
  verify->add_option("--seed", verify_seed, "Sweep seed")->capture_default_str();
  verify->add_option("--lemma1-mdps", tcfg.lemma1_mdps, "MDPs for the soft improvement check")->capture_default_str();
  verify->add_option("--taylor-draws", tcfg.taylor_draws, "Random softmax tables for the KL expansion check")
      ->capture_default_str();
  verify->add_option("--output", tcfg.output_dir, "Directory for theory_report.csv and failing_instance.json");
  verify->add_option("--tol-bound", tcfg.tol.bound, "Slack for the improvement inequalities")->capture_default_str();
  verify->add_option("--tol-lemma", tcfg.tol.lemma_exact, "Tolerance for lemmas 2 and 3")->capture_default_str();
  verify->add_option("--tol-lemma5", tcfg.tol.lemma5, "Tolerance for the entropy decomposition")
      ->capture_default_str();
  verify->add_option("--tol-lemma4", tcfg.tol.lemma4, "Tolerance for the performance difference identity")
      ->capture_default_str();
  verify->add_option("--tol-lemma1", tcfg.tol.lemma1, "Slack for soft policy improvement")->capture_default_str();
  verify->add_option("--tol-taylor", tcfg.tol.taylor_ratio, "Remainder ratio limit")->capture_default_str();
  verify->add_option("--replay", replay, "Recompute a serialized failing instance")->check(CLI::ExistingFile);

  auto* bench = app.add_subcommand("bench-comm", "Communication cost for a replica count");
  rsm::harness::BenchCommConfig bcfg;
  bench->add_option("--rho-total", bcfg.rho_total, "Reconstructed referential policies")->required();
  bench->add_option("--d", bcfg.d, "Policy parameter count")->required();
  bench->add_option("--rho-ef", bcfg.rho_ef, "Accepted mixes")->capture_default_str();
  bench->add_option("--segments", bcfg.segments, "Segments per replica")->capture_default_str();
  bench->add_option("--payload", bcfg.payload_bytes, "Bytes per message")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(config_path, overrides, mode, output, train_seed);
    if (*verify) {
      if (!replay.empty()) return cmd_replay(replay);
      tcfg.seed = static_cast<std::uint64_t>(verify_seed);
      const auto rep = rsm::harness::verify_theory(tcfg);
      rsm::harness::write_report_text(rep, std::cout);
      rsm::harness::write_theory_outputs(tcfg, rep);
      if (!rep.passed() && rep.first_failure) {
        std::cerr << "first failing instance:\n" << rsm::harness::to_json(*rep.first_failure).dump(2) << '\n';
      }
      return rep.passed() ? 0 : 1;
    }
    if (*bench) {
      rsm::harness::write_comm_table(rsm::harness::bench_comm(bcfg), std::cout);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
