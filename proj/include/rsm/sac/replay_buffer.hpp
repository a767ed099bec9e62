#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "rsm/common.hpp"

namespace rsm::sac {

struct Transition {
  Eigen::VectorXd s;
  Eigen::VectorXd a;
  double r = 0.0;
  Eigen::VectorXd s_next;
  double behavior_logp = 0.0;  // log pi_t(a|s) of the policy that collected it
  bool done = false;
};

/// Fixed-capacity FIFO ring of transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 100000) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
    storage_.reserve(std::min<std::size_t>(capacity, 4096));
  }

  void push(Transition t) {
    if (storage_.size() < capacity_) {
      storage_.push_back(std::move(t));
    } else {
      storage_[next_] = std::move(t);
    }
    next_ = (next_ + 1) % capacity_;
  }

  std::size_t size() const { return storage_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return storage_.empty(); }
  const Transition& operator[](std::size_t i) const { return storage_[i]; }

  /// Oldest-first view index -> storage index.
  const Transition& oldest(std::size_t i) const {
    if (storage_.size() < capacity_) return storage_[i];
    return storage_[(next_ + i) % capacity_];
  }

  /// `n` distinct indices drawn uniformly (Floyd's algorithm); n is capped at size().
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const {
    const std::size_t size = storage_.size();
    n = std::min(n, size);
    std::vector<std::size_t> picked;
    picked.reserve(n);
    std::unordered_set<std::size_t> seen;
    seen.reserve(n * 2);
    for (std::size_t j = size - n; j < size; ++j) {
      const std::size_t t = std::uniform_int_distribution<std::size_t>(0, j)(rng);
      if (seen.insert(t).second) {
        picked.push_back(t);
      } else {
        seen.insert(j);
        picked.push_back(j);
      }
    }
    return picked;
  }

  std::vector<Transition> sample(std::size_t n, Rng& rng) const {
    std::vector<Transition> out;
    for (std::size_t i : sample_indices(n, rng)) out.push_back(storage_[i]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> storage_;
};

/// Column-stacked view of a set of transitions.
struct Minibatch {
  Eigen::MatrixXd s;
  Eigen::MatrixXd a;
  Eigen::VectorXd r;
  Eigen::MatrixXd s_next;
  Eigen::VectorXd done;  // 1.0 where terminal
  Eigen::VectorXd behavior_logp;

  Eigen::Index size() const { return r.size(); }

  static Minibatch from(std::span<const Transition> items) {
    if (items.empty()) throw std::invalid_argument("Minibatch: empty batch");
    const auto n = static_cast<Eigen::Index>(items.size());
    const auto obs = items.front().s.size();
    const auto act = items.front().a.size();
    Minibatch mb{Eigen::MatrixXd(obs, n), Eigen::MatrixXd(act, n), Eigen::VectorXd(n),
                 Eigen::MatrixXd(obs, n), Eigen::VectorXd(n),      Eigen::VectorXd(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& t = items[static_cast<std::size_t>(i)];
      mb.s.col(i) = t.s;
      mb.a.col(i) = t.a;
      mb.r[i] = t.r;
      mb.s_next.col(i) = t.s_next;
      mb.done[i] = t.done ? 1.0 : 0.0;
      mb.behavior_logp[i] = t.behavior_logp;
    }
    return mb;
  }

  static Minibatch gather(const ReplayBuffer& buffer, std::span<const std::size_t> indices) {
    if (indices.empty()) throw std::invalid_argument("Minibatch: empty batch");
    const auto n = static_cast<Eigen::Index>(indices.size());
    const auto& first = buffer[indices.front()];
    Minibatch mb{Eigen::MatrixXd(first.s.size(), n), Eigen::MatrixXd(first.a.size(), n), Eigen::VectorXd(n),
                 Eigen::MatrixXd(first.s.size(), n), Eigen::VectorXd(n), Eigen::VectorXd(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& t = buffer[indices[static_cast<std::size_t>(i)]];
      mb.s.col(i) = t.s;
      mb.a.col(i) = t.a;
      mb.r[i] = t.r;
      mb.s_next.col(i) = t.s_next;
      mb.done[i] = t.done ? 1.0 : 0.0;
      mb.behavior_logp[i] = t.behavior_logp;
    }
    return mb;
  }
};

}  // namespace rsm::sac
