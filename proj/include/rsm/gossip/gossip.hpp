#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsm/common.hpp"
#include "rsm/nn/mlp.hpp"

namespace rsm::gossip {

using nn::ParamVector;

inline constexpr std::size_t kBitsPerParam = 32;
inline constexpr std::size_t kDefaultPayloadBytes = 4480;

// ---------------------------------------------------------------------------
// Neighborhoods

struct NeighborGraph {
  std::vector<std::vector<int>> adjacency;  // sorted ids

  std::size_t size() const { return adjacency.size(); }
  const std::vector<int>& of(int i) const { return adjacency[static_cast<std::size_t>(i)]; }
  std::size_t degree(int i) const { return of(i).size(); }
  bool connected(int i, int j) const { return std::binary_search(of(i).begin(), of(i).end(), j); }
};

using DistanceFn = std::function<double(int, int)>;

/// j is a neighbor of i iff distance(i, j) <= range and i != j (closed ball).
inline NeighborGraph neighbors(std::size_t count, double range, const DistanceFn& distance) {
  NeighborGraph g;
  g.adjacency.resize(count);
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = i + 1; j < count; ++j)
      if (distance(static_cast<int>(i), static_cast<int>(j)) <= range) {
        g.adjacency[i].push_back(static_cast<int>(j));
        g.adjacency[j].push_back(static_cast<int>(i));
      }
  for (auto& row : g.adjacency) std::sort(row.begin(), row.end());
  return g;
}

/// Arc-length neighbors on a ring of the given circumference.
inline NeighborGraph ring_neighbors(std::span<const double> positions, double circumference, double range) {
  return neighbors(positions.size(), range, [&](int i, int j) {
    const double d = std::fmod(std::abs(positions[static_cast<std::size_t>(i)] - positions[static_cast<std::size_t>(j)]),
                               circumference);
    return std::min(d, circumference - d);
  });
}

/// Euclidean neighbors for points given as rows.
inline NeighborGraph euclidean_neighbors(const Eigen::MatrixXd& points, double range) {
  return neighbors(static_cast<std::size_t>(points.rows()), range,
                   [&](int i, int j) { return (points.row(i) - points.row(j)).norm(); });
}

// ---------------------------------------------------------------------------
// Segmentation

struct SegmentBounds {
  std::size_t offset;
  std::size_t length;
};

/// Uniform partition of d coordinates into `parts` contiguous pieces; the first d % parts
/// pieces are one longer. `index` is 1-based.
inline SegmentBounds segment_bounds(std::size_t d, std::size_t parts, std::size_t index) {
  if (parts < 1 || parts > d) throw std::invalid_argument("segment: need 1 <= P_i <= d");
  if (index < 1 || index > parts) throw std::invalid_argument("segment: index out of range");
  const std::size_t base = d / parts;
  const std::size_t extra = d % parts;
  const std::size_t p = index - 1;
  const std::size_t offset = p * base + std::min(p, extra);
  return {offset, base + (p < extra ? 1 : 0)};
}

inline std::vector<ParamVector> segment(const ParamVector& theta, std::size_t parts) {
  const auto d = static_cast<std::size_t>(theta.size());
  std::vector<ParamVector> slices;
  slices.reserve(parts);
  for (std::size_t p = 1; p <= parts; ++p) {
    const auto b = segment_bounds(d, parts, p);
    slices.emplace_back(theta.segment(static_cast<Eigen::Index>(b.offset), static_cast<Eigen::Index>(b.length)));
  }
  return slices;
}

struct SegmentRequest {
  int requester;
  int total_segments;  // P_i
  int target;          // j_p
  int index;           // p, 1-based
};

struct SegmentResponse {
  int sender;
  int index;
  ParamVector slice;
};

inline SegmentResponse respond(const SegmentRequest& req, const ParamVector& sender_theta) {
  const auto b = segment_bounds(static_cast<std::size_t>(sender_theta.size()),
                                static_cast<std::size_t>(req.total_segments), static_cast<std::size_t>(req.index));
  return {req.target, req.index,
          sender_theta.segment(static_cast<Eigen::Index>(b.offset), static_cast<Eigen::Index>(b.length))};
}

/// Concatenates one response per segment index, in index order.
inline ParamVector build_referential(std::span<const SegmentResponse> responses, std::size_t d) {
  const std::size_t parts = responses.size();
  std::vector<const SegmentResponse*> by_index(parts, nullptr);
  for (const auto& r : responses) {
    if (r.index < 1 || static_cast<std::size_t>(r.index) > parts)
      throw std::invalid_argument("build_referential: segment index out of range");
    auto& slot = by_index[static_cast<std::size_t>(r.index - 1)];
    if (slot != nullptr) throw std::invalid_argument("build_referential: duplicate segment " + std::to_string(r.index));
    slot = &r;
  }
  ParamVector out(static_cast<Eigen::Index>(d));
  for (std::size_t p = 1; p <= parts; ++p) {
    const auto b = segment_bounds(d, parts, p);
    const auto* r = by_index[p - 1];
    if (r == nullptr) throw std::invalid_argument("build_referential: missing segment " + std::to_string(p));
    if (static_cast<std::size_t>(r->slice.size()) != b.length)
      throw std::invalid_argument("build_referential: segment " + std::to_string(p) + " has wrong length");
    out.segment(static_cast<Eigen::Index>(b.offset), static_cast<Eigen::Index>(b.length)) = r->slice;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ledger and cost

inline std::int64_t messages_for_segment(std::size_t segment_params, std::size_t payload_bytes) {
  const std::size_t bits = segment_params * kBitsPerParam;
  const std::size_t per_message = 8 * payload_bytes;
  return static_cast<std::int64_t>((bits + per_message - 1) / per_message);
}

struct CommLedger {
  std::int64_t rho_total = 0;  // successfully reconstructed referential policies
  std::int64_t rho_ef = 0;     // of those, mixed in
  std::int64_t bits_sent = 0;  // delivered segment payload; requests are free
  std::int64_t messages_sent = 0;
  std::int64_t attempted_replicas = 0;
  std::int64_t failed_reconstructions = 0;
  std::int64_t rounds = 0;

  double mixing_rate() const {
    return rho_total > 0 ? static_cast<double>(rho_ef) / static_cast<double>(rho_total) : 0.0;
  }
};

struct CommCost {
  double psi_gb;
  std::int64_t messages;
};

/// psi = rho_total * 32d / (8 * 1024^3) GB; messages counted per segment of a P-way split.
inline CommCost comm_cost(std::int64_t rho_total, std::size_t d, std::size_t segments = 1,
                          std::size_t payload_bytes = kDefaultPayloadBytes) {
  const double upsilon_bits = static_cast<double>(kBitsPerParam) * static_cast<double>(d);
  CommCost cost{static_cast<double>(rho_total) * upsilon_bits / (8.0 * 1024.0 * 1024.0 * 1024.0), 0};
  if (rho_total == 0) return cost;
  std::int64_t per_reconstruction = 0;
  for (std::size_t p = 1; p <= segments; ++p)
    per_reconstruction += messages_for_segment(segment_bounds(d, segments, p).length, payload_bytes);
  cost.messages = rho_total * per_reconstruction;
  return cost;
}

inline CommCost comm_cost(const CommLedger& ledger, std::size_t d) {
  return {static_cast<double>(ledger.rho_total) * static_cast<double>(kBitsPerParam) * static_cast<double>(d) /
              (8.0 * 1024.0 * 1024.0 * 1024.0),
          ledger.messages_sent};
}

// ---------------------------------------------------------------------------
// Communication round

struct RoundConfig {
  int segments = 4;  // P
  int replicas = 3;  // kappa
  double prr = 1.0;  // packet reception rate
  std::size_t payload_bytes = kDefaultPayloadBytes;
};

struct Referential {
  ParamVector theta;
  std::vector<int> sources;  // j_p per segment index
};

/// Picks `count` distinct entries of `pool` uniformly at random.
inline std::vector<int> choose_distinct(const std::vector<int>& pool, std::size_t count, Rng& rng) {
  std::vector<int> items = pool;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(i, items.size() - 1)(rng);
    std::swap(items[i], items[j]);
  }
  items.resize(count);
  return items;
}

/// One lockstep round. Every agent listed in `requesters` with at least one neighbor builds
/// kappa_i = min(kappa, |Omega_i|) replicas, each from P_i = min(P, |Omega_i|) segments fetched
/// from distinct neighbors. Responses come from `snapshots` and are dropped with probability
/// 1 - prr; a replica with any dropped segment is abandoned.
inline std::vector<std::vector<Referential>> run_comm_round(std::span<const ParamVector> snapshots,
                                                            const NeighborGraph& graph,
                                                            std::span<const int> requesters, const RoundConfig& config,
                                                            Rng& rng, CommLedger& ledger) {
  if (graph.size() != snapshots.size()) throw std::invalid_argument("run_comm_round: graph/snapshot size mismatch");
  if (config.segments < 1 || config.replicas < 0) throw std::invalid_argument("run_comm_round: bad P or kappa");
  std::vector<std::vector<Referential>> out(snapshots.size());
  ++ledger.rounds;
  for (int i : requesters) {
    const auto& omega = graph.of(i);
    if (omega.empty()) continue;
    const auto d = static_cast<std::size_t>(snapshots[static_cast<std::size_t>(i)].size());
    const std::size_t parts = std::min<std::size_t>({static_cast<std::size_t>(config.segments), omega.size(), d});
    const std::size_t kappa_i = std::min(static_cast<std::size_t>(config.replicas), omega.size());
    for (std::size_t r = 0; r < kappa_i; ++r) {
      ++ledger.attempted_replicas;
      const auto targets = choose_distinct(omega, parts, rng);
      std::vector<SegmentResponse> responses;
      bool complete = true;
      for (std::size_t p = 1; p <= parts; ++p) {
        const SegmentRequest req{i, static_cast<int>(parts), targets[p - 1], static_cast<int>(p)};
        const bool delivered = uniform01(rng) < config.prr;
        if (!delivered) {
          complete = false;
          continue;
        }
        auto resp = respond(req, snapshots[static_cast<std::size_t>(req.target)]);
        ledger.bits_sent += static_cast<std::int64_t>(resp.slice.size() * kBitsPerParam);
        ledger.messages_sent += messages_for_segment(static_cast<std::size_t>(resp.slice.size()), config.payload_bytes);
        responses.push_back(std::move(resp));
      }
      if (!complete) {
        ++ledger.failed_reconstructions;
        continue;
      }
      out[static_cast<std::size_t>(i)].push_back({build_referential(responses, d), targets});
      ++ledger.rho_total;
    }
  }
  return out;
}

}  // namespace rsm::gossip
