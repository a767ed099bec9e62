#pragma once

#include <cstdint>
#include <iomanip>
#include <ostream>

#include "rsm/gossip/gossip.hpp"

namespace rsm::harness {

struct BenchCommConfig {
  std::int64_t rho_total = 0;
  std::int64_t rho_ef = 0;
  std::size_t d = 0;
  std::size_t segments = 1;
  std::size_t payload_bytes = gossip::kDefaultPayloadBytes;
};

struct CommRow {
  std::int64_t rho_total = 0;
  double psi_gb = 0.0;
  std::int64_t rho_ef = 0;
  double rho_r = 0.0;
  std::int64_t messages = 0;
};

inline CommRow bench_comm(const BenchCommConfig& cfg) {
  if (cfg.rho_ef > cfg.rho_total) throw std::invalid_argument("bench-comm: rho_ef exceeds rho_total");
  CommRow row;
  row.rho_total = cfg.rho_total;
  row.rho_ef = cfg.rho_ef;
  if (cfg.rho_total == 0) return row;
  const auto cost = gossip::comm_cost(cfg.rho_total, cfg.d, cfg.segments, cfg.payload_bytes);
  row.psi_gb = cost.psi_gb;
  row.messages = cost.messages;
  row.rho_r = static_cast<double>(cfg.rho_ef) / static_cast<double>(cfg.rho_total);
  return row;
}

inline CommRow bench_comm(const gossip::CommLedger& ledger, std::size_t d) {
  const auto cost = gossip::comm_cost(ledger, d);
  return {ledger.rho_total, cost.psi_gb, ledger.rho_ef, ledger.mixing_rate(), cost.messages};
}

inline void write_comm_table(const CommRow& row, std::ostream& out) {
  out << "rho_total,psi_gb,rho_ef,rho_r,messages\n";
  out << row.rho_total << ',' << std::fixed << std::setprecision(3) << row.psi_gb << ',' << row.rho_ef << ','
      << std::setprecision(4) << row.rho_r << ',' << row.messages << '\n';
  out.unsetf(std::ios::fixed);
}

}  // namespace rsm::harness
