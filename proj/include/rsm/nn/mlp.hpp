#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rsm/common.hpp"

namespace rsm::nn {

/// Flat weight vector of one network. Layout is layer-major; within a layer the
/// out x in weight block (row-major) comes first, then the bias.
using ParamVector = Eigen::VectorXd;

/// Column-per-sample activations.
using Batch = Eigen::MatrixXd;

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { relu };
enum class OutputHead { gaussian_mean_logstd, scalar_q };

struct MlpSpec {
  std::vector<int> layer_widths;  // input, hidden..., output
  Activation activation = Activation::relu;
  OutputHead head = OutputHead::scalar_q;

  int input_dim() const { return layer_widths.front(); }
  int output_dim() const { return layer_widths.back(); }
  std::size_t num_layers() const { return layer_widths.size() - 1; }

  std::size_t param_count() const {
    std::size_t d = 0;
    for (std::size_t l = 0; l + 1 < layer_widths.size(); ++l)
      d += static_cast<std::size_t>(layer_widths[l]) * layer_widths[l + 1] + layer_widths[l + 1];
    return d;
  }

  void validate() const {
    if (layer_widths.size() < 3)
      throw std::invalid_argument("MlpSpec: need at least one hidden layer");
    for (int w : layer_widths)
      if (w <= 0) throw std::invalid_argument("MlpSpec: layer widths must be positive");
    if (head == OutputHead::scalar_q && output_dim() != 1)
      throw std::invalid_argument("MlpSpec: scalar_q head needs output width 1");
    if (head == OutputHead::gaussian_mean_logstd && output_dim() % 2 != 0)
      throw std::invalid_argument("MlpSpec: gaussian head needs an even output width");
  }
};

inline MlpSpec policy_spec(int obs_dim, const std::vector<int>& hidden, int act_dim) {
  MlpSpec spec;
  spec.layer_widths.push_back(obs_dim);
  spec.layer_widths.insert(spec.layer_widths.end(), hidden.begin(), hidden.end());
  spec.layer_widths.push_back(2 * act_dim);
  spec.head = OutputHead::gaussian_mean_logstd;
  spec.validate();
  return spec;
}

inline MlpSpec critic_spec(int obs_dim, int act_dim, const std::vector<int>& hidden) {
  MlpSpec spec;
  spec.layer_widths.push_back(obs_dim + act_dim);
  spec.layer_widths.insert(spec.layer_widths.end(), hidden.begin(), hidden.end());
  spec.layer_widths.push_back(1);
  spec.head = OutputHead::scalar_q;
  spec.validate();
  return spec;
}

struct LayerSlot {
  std::size_t weight_offset;
  std::size_t bias_offset;
  int in;
  int out;
};

inline std::vector<LayerSlot> layer_slots(const MlpSpec& spec) {
  std::vector<LayerSlot> slots;
  std::size_t offset = 0;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const int in = spec.layer_widths[l];
    const int out = spec.layer_widths[l + 1];
    slots.push_back({offset, offset + static_cast<std::size_t>(in) * out, in, out});
    offset += static_cast<std::size_t>(in) * out + out;
  }
  return slots;
}

inline void check_params(const MlpSpec& spec, const ParamVector& params) {
  if (static_cast<std::size_t>(params.size()) != spec.param_count())
    throw std::invalid_argument("parameter vector length " + std::to_string(params.size()) +
                                " does not match spec (" + std::to_string(spec.param_count()) + ")");
}

/// Glorot-uniform weights, zero biases.
inline ParamVector init_params(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  ParamVector params = ParamVector::Zero(static_cast<Eigen::Index>(spec.param_count()));
  for (const auto& slot : layer_slots(spec)) {
    const double limit = std::sqrt(6.0 / (slot.in + slot.out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (std::size_t i = 0; i < static_cast<std::size_t>(slot.in) * slot.out; ++i)
      params[static_cast<Eigen::Index>(slot.weight_offset + i)] = dist(rng);
  }
  return params;
}

/// Activations kept for the backward pass: values[0] is the input, values.back() the output.
struct ForwardCache {
  std::vector<Batch> values;
  const Batch& output() const { return values.back(); }
};

inline ForwardCache forward_cached(const MlpSpec& spec, const ParamVector& params, const Batch& inputs) {
  check_params(spec, params);
  if (inputs.rows() != spec.input_dim())
    throw std::invalid_argument("input width " + std::to_string(inputs.rows()) +
                                " does not match spec (" + std::to_string(spec.input_dim()) + ")");
  const auto slots = layer_slots(spec);
  ForwardCache cache;
  cache.values.reserve(slots.size() + 1);
  cache.values.push_back(inputs);
  for (std::size_t l = 0; l < slots.size(); ++l) {
    const auto& s = slots[l];
    Eigen::Map<const RowMajorMatrix> w(params.data() + s.weight_offset, s.out, s.in);
    Eigen::Map<const Eigen::VectorXd> b(params.data() + s.bias_offset, s.out);
    Batch z = w * cache.values.back();
    z.colwise() += b;
    if (l + 1 < slots.size()) z = z.cwiseMax(0.0);
    cache.values.push_back(std::move(z));
  }
  return cache;
}

inline Batch forward(const MlpSpec& spec, const ParamVector& params, const Batch& inputs) {
  return forward_cached(spec, params, inputs).values.back();
}

inline Eigen::VectorXd forward(const MlpSpec& spec, const ParamVector& params, const Eigen::VectorXd& input) {
  return forward_cached(spec, params, Batch(input)).values.back().col(0);
}

struct BackwardResult {
  ParamVector param_grad;  // summed over the batch columns
  Batch input_grad;
};

/// Vector-Jacobian product: given dL/d(output) per column, returns dL/d(params) and dL/d(input).
inline BackwardResult backward(const MlpSpec& spec, const ParamVector& params, const ForwardCache& cache,
                               const Batch& output_grad, bool want_param_grad = true) {
  const auto slots = layer_slots(spec);
  if (output_grad.rows() != spec.output_dim() || output_grad.cols() != cache.output().cols())
    throw std::invalid_argument("backward: output gradient shape mismatch");
  BackwardResult result;
  if (want_param_grad) result.param_grad = ParamVector::Zero(params.size());
  Batch delta = output_grad;
  for (std::size_t l = slots.size(); l-- > 0;) {
    const auto& s = slots[l];
    const Batch& prev = cache.values[l];
    if (want_param_grad) {
      Eigen::Map<RowMajorMatrix> gw(result.param_grad.data() + s.weight_offset, s.out, s.in);
      Eigen::Map<Eigen::VectorXd> gb(result.param_grad.data() + s.bias_offset, s.out);
      gw.noalias() = delta * prev.transpose();
      gb = delta.rowwise().sum();
    }
    Eigen::Map<const RowMajorMatrix> w(params.data() + s.weight_offset, s.out, s.in);
    Batch prev_delta = w.transpose() * delta;
    if (l > 0) prev_delta = prev_delta.cwiseProduct((prev.array() > 0.0).cast<double>().matrix());
    delta = std::move(prev_delta);
  }
  result.input_grad = std::move(delta);
  return result;
}

}  // namespace rsm::nn
