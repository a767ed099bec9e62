#pragma once

// Scalar reverse-mode tape. Slow but general; the batched backprop in mlp.hpp
// is what training uses, this is for arbitrary loss expressions and cross-checks.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "rsm/nn/mlp.hpp"

namespace rsm::nn {

class Tape;

struct Var {
  Tape* tape = nullptr;
  int index = -1;
  double value = 0.0;
};

class Tape {
 public:
  Var variable(double v) { return push(v, -1, 0.0, -1, 0.0); }
  Var constant(double v) { return push(v, -1, 0.0, -1, 0.0); }

  Var unary(const Var& x, double v, double dx) { return push(v, x.index, dx, -1, 0.0); }
  Var binary(const Var& x, const Var& y, double v, double dx, double dy) {
    return push(v, x.index, dx, y.index, dy);
  }

  /// Adjoints of every node w.r.t. `out`.
  std::vector<double> adjoints(const Var& out) const {
    std::vector<double> adj(nodes_.size(), 0.0);
    adj[static_cast<std::size_t>(out.index)] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      const Node& n = nodes_[i];
      if (adj[i] == 0.0) continue;
      if (n.lhs >= 0) adj[static_cast<std::size_t>(n.lhs)] += adj[i] * n.dlhs;
      if (n.rhs >= 0) adj[static_cast<std::size_t>(n.rhs)] += adj[i] * n.drhs;
    }
    return adj;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    int lhs;
    double dlhs;
    int rhs;
    double drhs;
  };

  Var push(double v, int lhs, double dlhs, int rhs, double drhs) {
    nodes_.push_back({lhs, dlhs, rhs, drhs});
    return Var{this, static_cast<int>(nodes_.size() - 1), v};
  }

  std::vector<Node> nodes_;
};

inline Var operator+(const Var& a, const Var& b) { return a.tape->binary(a, b, a.value + b.value, 1.0, 1.0); }
inline Var operator-(const Var& a, const Var& b) { return a.tape->binary(a, b, a.value - b.value, 1.0, -1.0); }
inline Var operator*(const Var& a, const Var& b) {
  return a.tape->binary(a, b, a.value * b.value, b.value, a.value);
}
inline Var operator/(const Var& a, const Var& b) {
  return a.tape->binary(a, b, a.value / b.value, 1.0 / b.value, -a.value / (b.value * b.value));
}
inline Var operator-(const Var& a) { return a.tape->unary(a, -a.value, -1.0); }
inline Var operator+(const Var& a, double c) { return a.tape->unary(a, a.value + c, 1.0); }
inline Var operator+(double c, const Var& a) { return a + c; }
inline Var operator-(const Var& a, double c) { return a.tape->unary(a, a.value - c, 1.0); }
inline Var operator-(double c, const Var& a) { return a.tape->unary(a, c - a.value, -1.0); }
inline Var operator*(const Var& a, double c) { return a.tape->unary(a, a.value * c, c); }
inline Var operator*(double c, const Var& a) { return a * c; }
inline Var operator/(const Var& a, double c) { return a.tape->unary(a, a.value / c, 1.0 / c); }

inline Var exp(const Var& a) {
  const double e = std::exp(a.value);
  return a.tape->unary(a, e, e);
}
inline Var log(const Var& a) { return a.tape->unary(a, std::log(a.value), 1.0 / a.value); }
inline Var tanh(const Var& a) {
  const double t = std::tanh(a.value);
  return a.tape->unary(a, t, 1.0 - t * t);
}
inline Var square(const Var& a) { return a.tape->unary(a, a.value * a.value, 2.0 * a.value); }
inline Var relu(const Var& a) { return a.tape->unary(a, std::max(a.value, 0.0), a.value > 0.0 ? 1.0 : 0.0); }
inline Var clamp(const Var& a, double lo, double hi) {
  const bool inside = a.value >= lo && a.value <= hi;
  return a.tape->unary(a, std::clamp(a.value, lo, hi), inside ? 1.0 : 0.0);
}
inline Var min(const Var& a, const Var& b) { return a.value <= b.value ? a.tape->unary(a, a.value, 1.0) : b.tape->unary(b, b.value, 1.0); }

/// MLP evaluated on the tape; same arithmetic as `forward`, independent code path.
inline std::vector<Var> forward_expr(const MlpSpec& spec, std::span<const Var> params, std::span<const Var> input) {
  std::vector<Var> act(input.begin(), input.end());
  const auto slots = layer_slots(spec);
  for (std::size_t l = 0; l < slots.size(); ++l) {
    const auto& s = slots[l];
    std::vector<Var> next;
    next.reserve(static_cast<std::size_t>(s.out));
    for (int o = 0; o < s.out; ++o) {
      Var z = params[s.bias_offset + static_cast<std::size_t>(o)];
      for (int i = 0; i < s.in; ++i)
        z = z + params[s.weight_offset + static_cast<std::size_t>(o) * s.in + static_cast<std::size_t>(i)] *
                    act[static_cast<std::size_t>(i)];
      next.push_back(l + 1 < slots.size() ? relu(z) : z);
    }
    act = std::move(next);
  }
  return act;
}

/// Gradient of a scalar loss built on the tape from the parameter variables.
/// `loss(tape, params)` must return a Var recorded on `tape`.
template <class Loss>
ParamVector grad(const MlpSpec& spec, const ParamVector& params, Loss&& loss) {
  check_params(spec, params);
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(static_cast<std::size_t>(params.size()));
  for (Eigen::Index i = 0; i < params.size(); ++i) vars.push_back(tape.variable(params[i]));
  const Var out = loss(tape, std::span<const Var>(vars));
  const auto adj = tape.adjoints(out);
  ParamVector g(params.size());
  for (Eigen::Index i = 0; i < params.size(); ++i) g[i] = adj[static_cast<std::size_t>(vars[static_cast<std::size_t>(i)].index)];
  return g;
}

}  // namespace rsm::nn
