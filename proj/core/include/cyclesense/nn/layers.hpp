#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "cyclesense/nn/ops.hpp"
#include "cyclesense/nn/tape.hpp"
#include "cyclesense/nn/tensor.hpp"

namespace cyclesense::nn {

/// Glorot/Xavier uniform: U(-l, l) with l = sqrt(6 / (fan_in + fan_out)).
template <typename S>
Tensor<S> glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor<S> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<S>((2.0 * detail::uniform01(rng) - 1.0) * limit);
  return t;
}

template <typename S>
struct Dense {
  Parameter<S>* weight = nullptr;  // [in, out]
  Parameter<S>* bias = nullptr;    // [out]

  static Dense create(ParameterSet<S>& params, const std::string& name, std::size_t in, std::size_t out,
                      std::mt19937_64& rng) {
    Dense d;
    d.weight = &params.add(name + ".w", glorot_uniform<S>({in, out}, in, out, rng));
    d.bias = &params.add(name + ".b", Tensor<S>({out}));
    return d;
  }

  /// x [N, in] -> [N, out]
  Var<S> operator()(Tape<S>& tape, Var<S> x) const {
    return add_bias(matmul(x, tape.param(*weight)), tape.param(*bias));
  }
};

struct ConvBlockConfig {
  std::array<std::size_t, 3> kernel{3, 3, 1};
  Padding padding = Padding::Same;
  std::size_t filters = 64;
  double dropout = 0.2;
  bool batch_norm = true;
  bool relu = true;
  BatchNormOptions bn{};
};

/// conv3d -> batch norm -> ReLU -> dropout, each stage optional except the
/// convolution.
template <typename S>
struct ConvBlock {
  ConvBlockConfig config;
  Parameter<S>* weight = nullptr;  // [k1, k2, k3, in, filters]
  Parameter<S>* bias = nullptr;
  Parameter<S>* gamma = nullptr;
  Parameter<S>* beta = nullptr;
  Parameter<S>* running_mean = nullptr;
  Parameter<S>* running_var = nullptr;

  static ConvBlock create(ParameterSet<S>& params, const std::string& name, std::size_t in_channels,
                          const ConvBlockConfig& config, std::mt19937_64& rng) {
    ConvBlock b;
    b.config = config;
    const auto& k = config.kernel;
    const std::size_t taps = k[0] * k[1] * k[2];
    b.weight = &params.add(name + ".conv.w", glorot_uniform<S>({k[0], k[1], k[2], in_channels, config.filters},
                                                               taps * in_channels, taps * config.filters, rng));
    b.bias = &params.add(name + ".conv.b", Tensor<S>({config.filters}));
    if (config.batch_norm) {
      b.gamma = &params.add(name + ".bn.gamma", Tensor<S>({config.filters}, S{1}));
      b.beta = &params.add(name + ".bn.beta", Tensor<S>({config.filters}));
      b.running_mean = &params.add(name + ".bn.mean", Tensor<S>({config.filters}), false);
      b.running_var = &params.add(name + ".bn.var", Tensor<S>({config.filters}, S{1}), false);
    }
    return b;
  }

  Var<S> operator()(Tape<S>& tape, Var<S> x, bool training) const {
    Var<S> y = conv3d(x, tape.param(*weight), tape.param(*bias), config.padding);
    if (config.batch_norm) {
      y = batch_norm(y, tape.param(*gamma), tape.param(*beta), *running_mean, *running_var, training, config.bn);
    }
    if (config.relu) y = relu(y);
    return dropout(y, config.dropout, training);
  }
};

/// inner(x) + x with two shape-preserving conv blocks.
template <typename S>
struct ResidualBlock {
  ConvBlock<S> first;
  ConvBlock<S> second;

  static ResidualBlock create(ParameterSet<S>& params, const std::string& name, std::size_t channels,
                              ConvBlockConfig config, std::mt19937_64& rng) {
    if (config.padding != Padding::Same || config.filters != channels) {
      throw ShapeMismatch("residual block " + name + " must preserve shape (same padding, filters == channels)");
    }
    ResidualBlock r;
    r.first = ConvBlock<S>::create(params, name + ".a", channels, config, rng);
    r.second = ConvBlock<S>::create(params, name + ".b", channels, config, rng);
    return r;
  }

  Var<S> operator()(Tape<S>& tape, Var<S> x, bool training) const {
    Var<S> inner = second(tape, first(tape, x, training), training);
    if (inner.shape() != x.shape()) {
      throw ShapeMismatch("residual block output " + to_string(inner.shape()) + " differs from input " +
                          to_string(x.shape()));
    }
    return add(inner, x);
  }
};

enum class CellType { Gru, Lstm };

inline std::string to_string(CellType cell) { return cell == CellType::Gru ? "gru" : "lstm"; }
inline CellType parse_cell(const std::string& text) {
  if (text == "gru" || text == "GRU") return CellType::Gru;
  if (text == "lstm" || text == "LSTM") return CellType::Lstm;
  throw std::invalid_argument("unknown recurrent cell '" + text + "' (expected gru or lstm)");
}

/// Stack of recurrent layers; layer l consumes the hidden sequence of layer
/// l-1 and the final hidden state of the last layer is returned.
///
/// GRU gates (r, z, n) per step:
///   r = sigmoid(x W_r + b_ir + h U_r + b_hr)
///   z = sigmoid(x W_z + b_iz + h U_z + b_hz)
///   n = tanh(x W_n + b_in + r * (h U_n + b_hn))
///   h' = (1 - z) * n + z * h
/// LSTM gates (i, f, g, o): c' = f*c + i*g, h' = o*tanh(c').
template <typename S>
struct RecurrentStack {
  struct Layer {
    Parameter<S>* w_input = nullptr;   // [in, gates*H]
    Parameter<S>* w_hidden = nullptr;  // [H, gates*H]
    Parameter<S>* b_input = nullptr;   // [gates*H]
    Parameter<S>* b_hidden = nullptr;  // [gates*H]
  };

  CellType cell = CellType::Gru;
  std::size_t units = 0;
  std::vector<Layer> layers;

  static std::size_t gates(CellType cell) { return cell == CellType::Gru ? 3 : 4; }

  static RecurrentStack create(ParameterSet<S>& params, const std::string& name, CellType cell, std::size_t in,
                               std::size_t units, std::size_t depth, std::mt19937_64& rng) {
    RecurrentStack r;
    r.cell = cell;
    r.units = units;
    const std::size_t g = gates(cell) * units;
    for (std::size_t l = 0; l < depth; ++l) {
      const std::string p = name + "." + std::to_string(l);
      const std::size_t fan = l == 0 ? in : units;
      Layer layer;
      layer.w_input = &params.add(p + ".w_ih", glorot_uniform<S>({fan, g}, fan, g, rng));
      layer.w_hidden = &params.add(p + ".w_hh", glorot_uniform<S>({units, g}, units, g, rng));
      layer.b_input = &params.add(p + ".b_ih", Tensor<S>({g}));
      layer.b_hidden = &params.add(p + ".b_hh", Tensor<S>({g}));
      r.layers.push_back(layer);
    }
    return r;
  }

  /// seq [B, T, F] -> final hidden state [B, H].
  Var<S> operator()(Tape<S>& tape, Var<S> seq) const {
    if (seq.shape().size() != 3) throw ShapeMismatch("recurrent input must be [batch, time, features]");
    const std::size_t batch = seq.dim(0);
    const std::size_t steps = seq.dim(1);
    std::vector<Var<S>> inputs;
    for (std::size_t t = 0; t < steps; ++t) inputs.push_back(reshape(slice(seq, 1, t, t + 1), {batch, seq.dim(2)}));
    for (const auto& layer : layers) inputs = run_layer(tape, layer, inputs, batch);
    return inputs.back();
  }

 private:
  std::vector<Var<S>> run_layer(Tape<S>& tape, const Layer& layer, const std::vector<Var<S>>& inputs,
                                std::size_t batch) const {
    const std::size_t h = units;
    const std::size_t steps = inputs.size();
    const std::size_t width = gates(cell) * h;
    // All input projections in one product: [B*T, F] x [F, gates*H].
    std::vector<Var<S>> rows_t;
    for (const auto& x : inputs) rows_t.push_back(reshape(x, {batch, 1, x.dim(1)}));
    Var<S> stacked = concat(rows_t, 1);  // [B, T, F]
    Var<S> proj = add_bias(matmul(reshape(stacked, {batch * steps, stacked.dim(2)}), tape.param(*layer.w_input)),
                           tape.param(*layer.b_input));
    proj = reshape(proj, {batch, steps, width});
    Var<S> w_hh = tape.param(*layer.w_hidden);
    Var<S> b_hh = tape.param(*layer.b_hidden);

    Var<S> state = tape.constant(Tensor<S>({batch, h}));
    Var<S> cell_state = state;
    std::vector<Var<S>> outputs;
    for (std::size_t t = 0; t < steps; ++t) {
      Var<S> xp = reshape(slice(proj, 1, t, t + 1), {batch, width});
      Var<S> hp = add_bias(matmul(state, w_hh), b_hh);
      if (cell == CellType::Gru) {
        Var<S> r = sigmoid(add(slice(xp, 1, 0, h), slice(hp, 1, 0, h)));
        Var<S> z = sigmoid(add(slice(xp, 1, h, 2 * h), slice(hp, 1, h, 2 * h)));
        Var<S> n = tanh(add(slice(xp, 1, 2 * h, 3 * h), mul(r, slice(hp, 1, 2 * h, 3 * h))));
        state = add(n, mul(z, sub(state, n)));
      } else {
        Var<S> gate_sum = add(xp, hp);
        Var<S> i = sigmoid(slice(gate_sum, 1, 0, h));
        Var<S> f = sigmoid(slice(gate_sum, 1, h, 2 * h));
        Var<S> g = tanh(slice(gate_sum, 1, 2 * h, 3 * h));
        Var<S> o = sigmoid(slice(gate_sum, 1, 3 * h, 4 * h));
        cell_state = add(mul(f, cell_state), mul(i, g));
        state = mul(o, tanh(cell_state));
      }
      outputs.push_back(state);
    }
    return outputs;
  }
};

}  // namespace cyclesense::nn
