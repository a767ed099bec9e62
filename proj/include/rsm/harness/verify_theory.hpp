#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsm/oracle/checks.hpp"
#include "rsm/oracle/instances.hpp"

namespace rsm::harness {

struct TheoryConfig {
  int instances = 1008;  // (MDP, pi, pi~) triples, each checked on the whole beta grid
  std::uint64_t seed = 0;
  int lemma1_mdps = 100;
  int taylor_draws = 50;
  std::vector<double> betas{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  oracle::Tolerances tol;
  std::string output_dir;  // theory_report.csv and failing_instance.json when non-empty
};

struct CheckRow {
  std::string name;
  bool asserted = true;  // report-only rows never fail the run
  std::int64_t cases = 0;
  std::int64_t failures = 0;
  double worst = 0.0;  // most adverse margin (negative is a violation for inequalities, error size otherwise)
  double seconds = 0.0;
  bool passed() const { return !asserted || failures == 0; }
};

/// Everything needed to recompute one failing check.
struct FailingCase {
  std::string check;
  std::uint64_t sweep_seed = 0;
  std::uint64_t index = 0;
  oracle::TheoryInstance instance;
  double beta = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  Eigen::MatrixXd logits;  // Taylor draws only
  Eigen::MatrixXd delta;
};

struct TheoryReport {
  std::vector<CheckRow> rows;
  std::optional<FailingCase> first_failure;
  bool passed() const {
    return std::all_of(rows.begin(), rows.end(), [](const CheckRow& r) { return r.passed(); });
  }
};

// ---------------------------------------------------------------------------
// JSON round trip

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  if (j.empty()) return {};
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  return m;
}

inline nlohmann::json to_json(const FailingCase& f) {
  const auto& in = f.instance;
  return {{"check", f.check},
          {"sweep_seed", f.sweep_seed},
          {"index", f.index},
          {"beta", f.beta},
          {"lhs", f.lhs},
          {"rhs", f.rhs},
          {"instance",
           {{"mdp_seed", in.mdp_seed},
            {"states", in.states},
            {"actions", in.actions},
            {"gamma", in.gamma},
            {"alpha", in.alpha},
            {"r_max", in.r_max},
            {"kind", oracle::to_string(in.kind)},
            {"pi", matrix_to_json(in.pi)},
            {"pi_ref", matrix_to_json(in.pi_ref)}}},
          {"logits", matrix_to_json(f.logits)},
          {"delta", matrix_to_json(f.delta)}};
}

inline FailingCase failing_case_from_json(const nlohmann::json& j) {
  FailingCase f;
  f.check = j.at("check").get<std::string>();
  f.sweep_seed = j.at("sweep_seed").get<std::uint64_t>();
  f.index = j.at("index").get<std::uint64_t>();
  f.beta = j.at("beta").get<double>();
  f.lhs = j.at("lhs").get<double>();
  f.rhs = j.at("rhs").get<double>();
  const auto& in = j.at("instance");
  f.instance.mdp_seed = in.at("mdp_seed").get<std::uint64_t>();
  f.instance.states = in.at("states").get<int>();
  f.instance.actions = in.at("actions").get<int>();
  f.instance.gamma = in.at("gamma").get<double>();
  f.instance.alpha = in.at("alpha").get<double>();
  f.instance.r_max = in.at("r_max").get<double>();
  f.instance.pi = matrix_from_json(in.at("pi"));
  f.instance.pi_ref = matrix_from_json(in.at("pi_ref"));
  f.logits = matrix_from_json(j.at("logits"));
  f.delta = matrix_from_json(j.at("delta"));
  return f;
}

// ---------------------------------------------------------------------------
// Individual checks, shared by the sweep and by replay

struct Sides {
  double lhs;
  double rhs;
};

/// Recomputes the two compared quantities of a named check:
/// inequalities give (lhs, rhs); identities give (left side, right side); lemma 1 gives (min gap, 0);
/// the Taylor check gives (largest small-zeta ratio, 0).
inline Sides evaluate_check(const FailingCase& f) {
  const auto& in = f.instance;
  if (f.check == "taylor") {
    const auto rep = oracle::kl_and_fim_taylor_check(f.logits, f.delta, {1e-1, 1e-2, 1e-3, 1e-4});
    return {*std::max_element(rep.ratios.begin() + 1, rep.ratios.end()), 0.0};
  }
  const auto mdp = in.mdp();
  if (f.check == "theorem1") {
    const auto c = oracle::theorem1_check(mdp, in.pi, in.pi_ref, f.beta);
    return {c.lhs, c.rhs};
  }
  if (f.check == "corollary1" || f.check == "corollary1_positivity") {
    const auto c = oracle::corollary1_check(mdp, in.pi, in.pi_ref, f.beta);
    return {c.lhs, c.rhs};
  }
  if (f.check == "lemma1") return {oracle::lemma1_min_gap(mdp, in.pi), 0.0};
  const auto r = oracle::lemma_checks(mdp, in.pi, in.pi_ref, f.beta);
  if (f.check == "lemma2") return {r.l2_error, 0.0};
  if (f.check == "lemma3") return {r.l3_error, 0.0};
  if (f.check == "lemma5") return {r.l5_error, 0.0};
  if (f.check == "lemma4") {
    const auto ev = oracle::soft_policy_evaluation(mdp, in.pi);
    const auto mix = oracle::mix_distributions(in.pi, in.pi_ref, f.beta);
    const auto ev_mix = oracle::soft_policy_evaluation(mdp, mix);
    const Eigen::VectorXd inner = mix.cwiseProduct(ev.A).rowwise().sum() + mdp.alpha * oracle::entropies(mix);
    return {ev_mix.eta - ev.eta, ev_mix.d_pi.dot(inner)};
  }
  throw std::invalid_argument("unknown check '" + f.check + "'");
}

// ---------------------------------------------------------------------------
// Sweep

inline TheoryReport verify_theory(const TheoryConfig& cfg) {
  using clock = std::chrono::steady_clock;
  const auto& tol = cfg.tol;
  TheoryReport rep;
  auto add_row = [&](std::string name, bool asserted) -> CheckRow& {
    rep.rows.push_back({std::move(name), asserted, 0, 0, 0.0, 0.0});
    return rep.rows.back();
  };
  auto record_failure = [&](const std::string& check, std::uint64_t index, const oracle::TheoryInstance& inst,
                            double beta) {
    if (rep.first_failure) return;
    FailingCase f;
    f.check = check;
    f.sweep_seed = cfg.seed;
    f.index = index;
    f.instance = inst;
    f.beta = beta;
    const auto sides = evaluate_check(f);
    f.lhs = sides.lhs;
    f.rhs = sides.rhs;
    rep.first_failure = f;
  };

  const auto t_sweep = clock::now();
  CheckRow th1{"theorem1", true}, th1n{"theorem1_normalized", false};
  CheckRow co1{"corollary1", true}, co1n{"corollary1_normalized", false};
  CheckRow pos{"corollary1_positivity", true}, order{"corollary1_rhs_le_theorem1_rhs", false};
  CheckRow l2{"lemma2", true}, l3{"lemma3", true}, l5{"lemma5", true}, l4{"lemma4", true};
  CheckRow l4n{"lemma4_normalized", false};
  th1.worst = co1.worst = th1n.worst = co1n.worst = std::numeric_limits<double>::infinity();
  pos.worst = std::numeric_limits<double>::infinity();

  for (int idx = 0; idx < cfg.instances; ++idx) {
    const auto index = static_cast<std::uint64_t>(idx);
    const auto inst = oracle::make_instance(cfg.seed, index);
    const auto mdp = inst.mdp();
    std::vector<double> betas = cfg.betas;
    // positivity needs beta < A/C, which the coarse grid rarely reaches for gamma near 1
    const auto probe = oracle::corollary1_check(mdp, inst.pi, inst.pi_ref, 0.0);
    if (probe.advantage > 0.0 && probe.c_const > 0.0) {
      const double limit = probe.advantage / probe.c_const;
      for (double frac : {0.1, 0.5, 0.9})
        if (frac * limit <= 1.0) betas.push_back(frac * limit);
    }
    for (double beta : betas) {
      const auto t1 = oracle::theorem1_check(mdp, inst.pi, inst.pi_ref, beta, tol.bound);
      ++th1.cases;
      th1.worst = std::min(th1.worst, t1.lhs - t1.rhs);
      if (!t1.holds) {
        ++th1.failures;
        record_failure("theorem1", index, inst, beta);
      }
      ++th1n.cases;
      th1n.worst = std::min(th1n.worst, t1.lhs - t1.rhs_normalized);
      if (!t1.holds_normalized) ++th1n.failures;

      const auto c1 = oracle::corollary1_check(mdp, inst.pi, inst.pi_ref, beta, tol.bound);
      ++co1.cases;
      co1.worst = std::min(co1.worst, c1.lhs - c1.rhs);
      if (!c1.holds) {
        ++co1.failures;
        record_failure("corollary1", index, inst, beta);
      }
      ++co1n.cases;
      co1n.worst = std::min(co1n.worst, c1.lhs - c1.rhs_normalized);
      if (!c1.holds_normalized) ++co1n.failures;
      if (c1.positivity_applies) {
        ++pos.cases;
        pos.worst = std::min(pos.worst, c1.lhs);
        if (!c1.positive) {
          ++pos.failures;
          record_failure("corollary1_positivity", index, inst, beta);
        }
      }
      ++order.cases;
      order.worst = std::max(order.worst, c1.rhs - t1.rhs);
      if (c1.rhs > t1.rhs + tol.bound) ++order.failures;

      const auto lr = oracle::lemma_checks(mdp, inst.pi, inst.pi_ref, beta);
      auto tally = [&](CheckRow& row, double err, double limit, const char* name) {
        ++row.cases;
        row.worst = std::max(row.worst, err);
        if (!(err <= limit)) {
          ++row.failures;
          record_failure(name, index, inst, beta);
        }
      };
      tally(l2, lr.l2_error, tol.lemma_exact, "lemma2");
      tally(l3, lr.l3_error, tol.lemma_exact, "lemma3");
      tally(l5, lr.l5_error, tol.lemma5, "lemma5");
      tally(l4, lr.l4_error, tol.lemma4, "lemma4");
      ++l4n.cases;
      l4n.worst = std::max(l4n.worst, lr.l4_error_normalized);
      if (lr.l4_error_normalized > tol.lemma4) ++l4n.failures;
    }
  }
  const double sweep_s = std::chrono::duration<double>(clock::now() - t_sweep).count();
  for (CheckRow* r : {&th1, &th1n, &co1, &co1n, &pos, &order, &l2, &l3, &l5, &l4, &l4n}) {
    r->seconds = sweep_s;
    if (std::isinf(r->worst)) r->worst = 0.0;
    rep.rows.push_back(*r);
  }

  // Lemma 1 on fresh MDPs with random policies.
  {
    const auto t = clock::now();
    auto& row = add_row("lemma1", true);
    row.worst = std::numeric_limits<double>::infinity();
    for (int m = 0; m < cfg.lemma1_mdps; ++m) {
      const auto index = static_cast<std::uint64_t>(m);
      auto inst = oracle::make_instance(cfg.seed ^ 0x5eedULL, index);
      const double gap = oracle::lemma1_min_gap(inst.mdp(), inst.pi);
      ++row.cases;
      row.worst = std::min(row.worst, gap);
      if (gap < -tol.lemma1) {
        ++row.failures;
        record_failure("lemma1", index, inst, 0.0);
      }
    }
    if (std::isinf(row.worst)) row.worst = 0.0;
    row.seconds = std::chrono::duration<double>(clock::now() - t).count();
  }

  // Second-order KL expansion on softmax tables.
  {
    const auto t = clock::now();
    CheckRow taylor_row{"taylor", true}, score{"score_identity", true};
    const std::vector<double> zetas{1e-1, 1e-2, 1e-3, 1e-4};
    for (int k = 0; k < cfg.taylor_draws; ++k) {
      Rng rng = stream(cfg.seed ^ 0x7a71ULL, static_cast<std::uint64_t>(k));
      const int ns = 1 + static_cast<int>(rng() % 5);
      const int na = 2 + static_cast<int>(rng() % 3);
      const Eigen::MatrixXd logits = 2.0 * standard_normal(ns, na, rng);
      const Eigen::MatrixXd delta = standard_normal(ns, na, rng);
      const auto r = oracle::kl_and_fim_taylor_check(logits, delta, zetas);
      double worst_ratio = 0.0;
      for (std::size_t i = 1; i < r.ratios.size(); ++i) worst_ratio = std::max(worst_ratio, r.ratios[i]);
      ++taylor_row.cases;
      taylor_row.worst = std::max(taylor_row.worst, worst_ratio);
      ++score.cases;
      score.worst = std::max(score.worst, r.score_error);
      if (r.score_error > tol.score) ++score.failures;
      if (!(worst_ratio < tol.taylor_ratio)) {
        ++taylor_row.failures;
        if (!rep.first_failure) {
          FailingCase f;
          f.check = "taylor";
          f.sweep_seed = cfg.seed;
          f.index = static_cast<std::uint64_t>(k);
          f.logits = logits;
          f.delta = delta;
          f.lhs = worst_ratio;
          rep.first_failure = f;
        }
      }
    }
    const double secs = std::chrono::duration<double>(clock::now() - t).count();
    taylor_row.seconds = secs;
    score.seconds = secs;
    rep.rows.push_back(taylor_row);
    rep.rows.push_back(score);
  }
  return rep;
}

inline void write_report_csv(const TheoryReport& rep, std::ostream& out) {
  out << "check,asserted,cases,failures,worst,seconds,status\n";
  out << std::setprecision(6);
  for (const auto& r : rep.rows)
    out << r.name << ',' << (r.asserted ? 1 : 0) << ',' << r.cases << ',' << r.failures << ',' << r.worst << ','
        << r.seconds << ',' << (r.asserted ? (r.passed() ? "pass" : "FAIL") : "report") << '\n';
}

inline void write_report_text(const TheoryReport& rep, std::ostream& out) {
  out << std::left << std::setw(32) << "check" << std::setw(8) << "cases" << std::setw(10) << "failures"
      << std::setw(14) << "worst" << "status\n";
  for (const auto& r : rep.rows)
    out << std::left << std::setw(32) << r.name << std::setw(8) << r.cases << std::setw(10) << r.failures
        << std::setw(14) << std::setprecision(4) << r.worst
        << (r.asserted ? (r.passed() ? "pass" : "FAIL") : "report") << '\n';
  out << (rep.passed() ? "all asserted checks passed\n" : "some checks FAILED\n");
}

/// Writes theory_report.csv (and failing_instance.json on failure) into cfg.output_dir.
inline void write_theory_outputs(const TheoryConfig& cfg, const TheoryReport& rep) {
  if (cfg.output_dir.empty()) return;
  std::filesystem::create_directories(cfg.output_dir);
  std::ofstream csv(std::filesystem::path(cfg.output_dir) / "theory_report.csv");
  write_report_csv(rep, csv);
  if (rep.first_failure) {
    std::ofstream js(std::filesystem::path(cfg.output_dir) / "failing_instance.json");
    js << to_json(*rep.first_failure).dump(2) << '\n';
  }
}

}  // namespace rsm::harness
