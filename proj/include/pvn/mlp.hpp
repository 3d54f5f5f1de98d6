// Feed-forward networks stored as a single flat parameter vector.
//
// Layout (frozen; flattened policies and checkpoints depend on it): for each
// layer l in order, the weight matrix W_l of shape [fan_in x fan_out] in
// row-major order, followed by the bias vector b_l of length fan_out.
// A layer computes y = x W_l + b_l, so a batch of inputs is a matrix with one
// sample per row.

#ifndef PVN_MLP_HPP_
#define PVN_MLP_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pvn/autodiff.hpp"
#include "pvn/error.hpp"
#include "pvn/rng.hpp"
#include "pvn/tensor.hpp"

namespace pvn {

enum class Activation { relu, tanh };
enum class OutputHead { softmax, linear };

inline std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }
inline std::string to_string(OutputHead h) { return h == OutputHead::softmax ? "softmax" : "linear"; }

inline Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + s + "'");
}

inline OutputHead parse_output_head(const std::string& s) {
  if (s == "softmax") return OutputHead::softmax;
  if (s == "linear") return OutputHead::linear;
  throw ConfigError("unknown output head '" + s + "'");
}

struct MlpArch {
  std::size_t input = 1;
  std::vector<std::size_t> hidden;
  std::size_t output = 1;
  Activation activation = Activation::relu;
  OutputHead head = OutputHead::softmax;
  /// Softmax temperature; logits are divided by it. Ignored by linear heads.
  double temperature = 1.0;

  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> w{input};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(output);
    return w;
  }

  std::size_t num_layers() const { return hidden.size() + 1; }

  std::size_t param_count() const {
    const auto w = widths();
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < w.size(); ++l) n += w[l] * w[l + 1] + w[l + 1];
    return n;
  }

  void validate() const {
    if (input == 0 || output == 0) throw ShapeError("network widths must be positive");
    for (std::size_t h : hidden)
      if (h == 0) throw ShapeError("hidden widths must be positive");
    if (!(temperature > 0.0) || !std::isfinite(temperature))
      throw ShapeError("softmax temperature must be positive");
  }

  friend bool operator==(const MlpArch&, const MlpArch&) = default;
};

/// Offsets of W_l and b_l inside the flat parameter vector.
struct LayerOffsets {
  std::size_t weights;
  std::size_t bias;
  std::size_t fan_in;
  std::size_t fan_out;
};

inline std::vector<LayerOffsets> layer_offsets(const MlpArch& arch) {
  const auto w = arch.widths();
  std::vector<LayerOffsets> out;
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    out.push_back({off, off + w[l] * w[l + 1], w[l], w[l + 1]});
    off += w[l] * w[l + 1] + w[l + 1];
  }
  return out;
}

/// Runs the network on a batch (one sample per row). Works on plain Tensors
/// and on graph Vars alike; for Vars the result is differentiable with respect
/// to both `params` and `input`.
template <class T>
T mlp_forward(const T& params, const MlpArch& arch, const T& input, std::size_t param_size,
              std::size_t input_cols) {
  if (param_size != arch.param_count()) {
    throw ShapeError("parameter vector has " + std::to_string(param_size) + " values, architecture needs " +
                     std::to_string(arch.param_count()));
  }
  if (input_cols != arch.input) {
    throw ShapeError("input width " + std::to_string(input_cols) + " does not match architecture input " +
                     std::to_string(arch.input));
  }
  const auto layers = layer_offsets(arch);
  T x = input;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerOffsets& L = layers[l];
    T w = slice(params, L.weights, {L.fan_in, L.fan_out});
    T b = slice(params, L.bias, {L.fan_out});
    x = add_row(matmul(x, w), b);
    if (l + 1 < layers.size()) {
      x = arch.activation == Activation::relu ? relu(x) : tanh(x);
    }
  }
  if (arch.head == OutputHead::softmax) x = softmax_rows(x, arch.temperature);
  return x;
}

inline Tensor mlp_forward(const Tensor& params, const MlpArch& arch, const Tensor& input) {
  Tensor batch = input.rank() == 1 ? reshape(input, {1, input.size()}) : input;
  Tensor out = mlp_forward<Tensor>(params, arch, batch, params.size(), batch.cols());
  if constexpr (kCheckedBuild) out.check_finite("mlp_forward");
  return out;
}

inline Var mlp_forward(Var params, const MlpArch& arch, Var input) {
  Graph& g = *params.graph;
  const Tensor& in = g.value(input);
  Var batch = in.rank() == 1 ? reshape(input, {1, in.size()}) : input;
  return mlp_forward<Var>(params, arch, batch, g.value(params).size(), g.value(batch).cols());
}

/// Uniform Glorot initialization of a [fan_in x fan_out] weight matrix:
/// entries in +-sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_init(const Shape& shape, std::uint64_t seed) {
  if (shape.size() < 2) throw ShapeError("glorot_init needs a weight shape with at least 2 dims");
  const double fan_in = static_cast<double>(shape[0]);
  const double fan_out = static_cast<double>(shape_size(shape) / shape[0]);
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  Rng rng(seed);
  Tensor out = Tensor::zeros(shape);
  for (double& v : out.data()) v = rng.uniform(-bound, bound);
  return out;
}

/// Flat parameter vector with Glorot-uniform weights and zero biases.
/// Layer l draws from derive_seed(seed, {l}).
inline std::vector<double> glorot_init_params(const MlpArch& arch, std::uint64_t seed) {
  std::vector<double> params(arch.param_count(), 0.0);
  const auto layers = layer_offsets(arch);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Tensor w = glorot_init({layers[l].fan_in, layers[l].fan_out}, derive_seed(seed, {l}));
    std::copy(w.data().begin(), w.data().end(), params.begin() + static_cast<std::ptrdiff_t>(layers[l].weights));
  }
  return params;
}

}  // namespace pvn

#endif  // PVN_MLP_HPP_
