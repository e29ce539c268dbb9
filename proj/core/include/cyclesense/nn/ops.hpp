#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cyclesense/nn/tape.hpp"
#include "cyclesense/nn/tensor.hpp"

// Differentiable operations on tape variables. Every op computes its forward
// value eagerly and records a backward rule that accumulates into the input
// gradients. Layouts are row-major and channel-last.
namespace cyclesense::nn {

namespace detail {

template <typename S>
using MatrixMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using ConstMatrixMap = Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ShapeMismatch(message);
}

/// Uniform double in [0, 1) from the top 53 bits; independent of the
/// standard library's distribution implementations.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <typename S, typename F>
Var<S> unary(Var<S> x, F&& forward, std::function<S(S x, S y)> derivative) {
  auto& tape = x.tape();
  Tensor<S> out(x.shape());
  const auto& in = x.value();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward(in[i]);
  return tape.record(std::move(out), {x}, [x, derivative](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& xv = t.value(x.id());
    const auto& yv = t.value(self);
    auto& gx = t.grad(x.id());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * derivative(xv[i], yv[i]);
  });
}

}  // namespace detail

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  detail::require(a.shape() == b.shape(), "add: shape " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  Tensor<S> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    for (auto v : {a, b}) {
      if (!v.needs_grad()) continue;
      auto& gv = t.grad(v.id());
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    }
  });
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  detail::require(a.shape() == b.shape(), "sub: shape mismatch");
  Tensor<S> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (a.needs_grad()) {
      auto& ga = t.grad(a.id());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.needs_grad()) {
      auto& gb = t.grad(b.id());
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <typename S>
Var<S> mul(Var<S> a, Var<S> b) {
  detail::require(a.shape() == b.shape(), "mul: shape mismatch");
  Tensor<S> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& av = t.value(a.id());
    const auto& bv = t.value(b.id());
    if (a.needs_grad()) {
      auto& ga = t.grad(a.id());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (b.needs_grad()) {
      auto& gb = t.grad(b.id());
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

/// alpha * x + beta, elementwise.
template <typename S>
Var<S> affine(Var<S> x, S alpha, S beta) {
  return detail::unary<S>(
      x, [=](S v) { return alpha * v + beta; }, [=](S, S) { return alpha; });
}

template <typename S>
Var<S> relu(Var<S> x) {
  return detail::unary<S>(
      x, [](S v) { return v > S{0} ? v : S{0}; }, [](S v, S) { return v > S{0} ? S{1} : S{0}; });
}

template <typename S>
Var<S> leaky_relu(Var<S> x, S slope) {
  return detail::unary<S>(
      x, [=](S v) { return v > S{0} ? v : slope * v; }, [=](S v, S) { return v > S{0} ? S{1} : slope; });
}

template <typename S>
Var<S> sigmoid(Var<S> x) {
  return detail::unary<S>(
      x,
      [](S v) {
        if (v >= S{0}) return S{1} / (S{1} + std::exp(-v));
        const S e = std::exp(v);
        return e / (S{1} + e);
      },
      [](S, S y) { return y * (S{1} - y); });
}

template <typename S>
Var<S> tanh(Var<S> x) {
  return detail::unary<S>(
      x, [](S v) { return std::tanh(v); }, [](S, S y) { return S{1} - y * y; });
}

template <typename S>
Var<S> square(Var<S> x) {
  return detail::unary<S>(
      x, [](S v) { return v * v; }, [](S v, S) { return S{2} * v; });
}

/// x [..., C] + bias [C].
template <typename S>
Var<S> add_bias(Var<S> x, Var<S> bias) {
  const std::size_t c = bias.value().size();
  detail::require(x.shape().back() == c, "add_bias: last axis " + std::to_string(x.shape().back()) +
                                             " vs bias " + std::to_string(c));
  Tensor<S> out = x.value();
  const auto& b = bias.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i % c];
  return x.tape().record(std::move(out), {x, bias}, [x, bias, c](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (x.needs_grad()) {
      auto& gx = t.grad(x.id());
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (bias.needs_grad()) {
      auto& gb = t.grad(bias.id());
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % c] += g[i];
    }
  });
}

/// a [N, K] x b [K, M] -> [N, M].
template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  detail::require(a.shape().size() == 2 && b.shape().size() == 2 && a.dim(1) == b.dim(0),
                  "matmul: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  const auto n = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto m = static_cast<Eigen::Index>(b.dim(1));
  Tensor<S> out({a.dim(0), b.dim(1)});
  detail::MatrixMap<S>(out.data(), n, m).noalias() =
      detail::ConstMatrixMap<S>(a.value().data(), n, k) * detail::ConstMatrixMap<S>(b.value().data(), k, m);
  return a.tape().record(std::move(out), {a, b}, [a, b, n, k, m](Tape<S>& t, std::size_t self) {
    detail::ConstMatrixMap<S> g(t.grad(self).data(), n, m);
    if (a.needs_grad()) {
      detail::MatrixMap<S>(t.grad(a.id()).data(), n, k).noalias() +=
          g * detail::ConstMatrixMap<S>(t.value(b.id()).data(), k, m).transpose();
    }
    if (b.needs_grad()) {
      detail::MatrixMap<S>(t.grad(b.id()).data(), k, m).noalias() +=
          detail::ConstMatrixMap<S>(t.value(a.id()).data(), n, k).transpose() * g;
    }
  });
}

template <typename S>
Var<S> reshape(Var<S> x, Shape shape) {
  Tensor<S> out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x}, [x](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(x.id());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

namespace detail {

inline std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

// For every output element, the flat index of its source in the input.
inline std::vector<std::size_t> permutation_index(const Shape& in_shape, const std::vector<std::size_t>& perm) {
  Shape out_shape(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = in_shape[perm[i]];
  const auto in_strides = strides_of(in_shape);
  std::vector<std::size_t> src_stride(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) src_stride[i] = in_strides[perm[i]];
  const std::size_t total = numel(out_shape);
  std::vector<std::size_t> index(total);
  std::vector<std::size_t> counter(perm.size(), 0);
  std::size_t src = 0;
  for (std::size_t o = 0; o < total; ++o) {
    index[o] = src;
    for (std::size_t axis = perm.size(); axis-- > 0;) {
      ++counter[axis];
      src += src_stride[axis];
      if (counter[axis] < out_shape[axis]) break;
      src -= src_stride[axis] * counter[axis];
      counter[axis] = 0;
    }
  }
  return index;
}

}  // namespace detail

/// Output axis i is input axis perm[i].
template <typename S>
Var<S> permute(Var<S> x, std::vector<std::size_t> perm) {
  const auto& in_shape = x.shape();
  detail::require(perm.size() == in_shape.size(), "permute: rank mismatch");
  std::vector<bool> seen(perm.size(), false);
  for (auto p : perm) {
    detail::require(p < perm.size() && !seen[p], "permute: invalid permutation");
    seen[p] = true;
  }
  Shape out_shape(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = in_shape[perm[i]];
  auto index = std::make_shared<std::vector<std::size_t>>(detail::permutation_index(in_shape, perm));
  Tensor<S> out(out_shape);
  const auto& xv = x.value();
  for (std::size_t o = 0; o < out.size(); ++o) out[o] = xv[(*index)[o]];
  return x.tape().record(std::move(out), {x}, [x, index](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(x.id());
    for (std::size_t o = 0; o < g.size(); ++o) gx[(*index)[o]] += g[o];
  });
}

/// Concatenation along `axis`; all other extents must agree.
template <typename S>
Var<S> concat(const std::vector<Var<S>>& xs, std::size_t axis) {
  detail::require(!xs.empty(), "concat: no inputs");
  Shape out_shape = xs.front().shape();
  detail::require(axis < out_shape.size(), "concat: axis out of range");
  out_shape[axis] = 0;
  for (const auto& x : xs) {
    const auto& s = x.shape();
    detail::require(s.size() == out_shape.size(), "concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis) detail::require(s[i] == xs.front().shape()[i], "concat: extent mismatch on axis " + std::to_string(i));
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= out_shape[i];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < out_shape.size(); ++i) inner *= out_shape[i];
  Tensor<S> out(out_shape);
  const std::size_t out_row = out_shape[axis] * inner;
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& x : xs) {
    const std::size_t row = x.shape()[axis] * inner;
    const auto& v = x.value();
    for (std::size_t o = 0; o < outer; ++o) std::copy_n(v.data() + o * row, row, out.data() + o * out_row + offset);
    offsets.push_back(offset);
    offset += row;
  }
  return xs.front().tape().record(std::move(out), xs, [xs, offsets, outer, inner, axis, out_row](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    for (std::size_t k = 0; k < xs.size(); ++k) {
      if (!xs[k].needs_grad()) continue;
      const std::size_t row = xs[k].shape()[axis] * inner;
      auto& gx = t.grad(xs[k].id());
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < row; ++i) gx[o * row + i] += g[o * out_row + offsets[k] + i];
      }
    }
  });
}

/// Elements [begin, end) along `axis`.
template <typename S>
Var<S> slice(Var<S> x, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto& in_shape = x.shape();
  detail::require(axis < in_shape.size() && begin < end && end <= in_shape[axis], "slice: bad range");
  Shape out_shape = in_shape;
  out_shape[axis] = end - begin;
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= in_shape[i];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < in_shape.size(); ++i) inner *= in_shape[i];
  const std::size_t in_row = in_shape[axis] * inner;
  const std::size_t out_row = (end - begin) * inner;
  Tensor<S> out(out_shape);
  const auto& v = x.value();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(v.data() + o * in_row + begin * inner, out_row, out.data() + o * out_row);
  }
  return x.tape().record(std::move(out), {x}, [=](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(x.id());
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < out_row; ++i) gx[o * in_row + begin * inner + i] += g[o * out_row + i];
    }
  });
}

/// Mean over one axis, kept with extent 1.
template <typename S>
Var<S> mean_axis(Var<S> x, std::size_t axis) {
  const auto& in_shape = x.shape();
  detail::require(axis < in_shape.size(), "mean_axis: axis out of range");
  Shape out_shape = in_shape;
  out_shape[axis] = 1;
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= in_shape[i];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < in_shape.size(); ++i) inner *= in_shape[i];
  const std::size_t n = in_shape[axis];
  const S scale = S{1} / static_cast<S>(n);
  Tensor<S> out(out_shape);
  const auto& v = x.value();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < n; ++k) {
      const S* src = v.data() + (o * n + k) * inner;
      S* dst = out.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  for (auto& value : out.values()) value *= scale;
  return x.tape().record(std::move(out), {x}, [=](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(x.id());
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < inner; ++i) gx[(o * n + k) * inner + i] += g[o * inner + i] * scale;
      }
    }
  });
}

/// [B, ..., C] -> [B, C], mean over every axis between batch and channels.
template <typename S>
Var<S> global_average_pool(Var<S> x) {
  const auto& s = x.shape();
  detail::require(s.size() >= 2, "global_average_pool: rank < 2");
  const std::size_t b = s.front();
  const std::size_t c = s.back();
  const std::size_t p = x.value().size() / (b * c);
  auto pooled = mean_axis(reshape(x, {b, p, c}), 1);
  return reshape(pooled, {b, c});
}

template <typename S>
Var<S> sum(Var<S> x) {
  S total{0};
  for (S v : x.value().values()) total += v;
  return x.tape().record(Tensor<S>({1}, std::vector<S>{total}), {x}, [x](Tape<S>& t, std::size_t self) {
    const S g = t.grad(self)[0];
    auto& gx = t.grad(x.id());
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

template <typename S>
Var<S> mean(Var<S> x) {
  return affine(sum(x), S{1} / static_cast<S>(x.value().size()), S{0});
}

/// Sum of x * weights for a constant weight tensor; a generic scalar probe
/// for gradient checks.
template <typename S>
Var<S> weighted_sum(Var<S> x, const Tensor<S>& weights) {
  detail::require(weights.size() == x.value().size(), "weighted_sum: size mismatch");
  S total{0};
  for (std::size_t i = 0; i < weights.size(); ++i) total += x.value()[i] * weights[i];
  return x.tape().record(Tensor<S>({1}, std::vector<S>{total}), {x}, [x, weights](Tape<S>& t, std::size_t self) {
    const S g = t.grad(self)[0];
    auto& gx = t.grad(x.id());
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * weights[i];
  });
}

enum class Padding { Valid, Same };

struct Conv3dGeometry {
  std::array<std::size_t, 3> in{};
  std::array<std::size_t, 3> kernel{};
  std::array<std::size_t, 3> out{};
  std::array<std::size_t, 3> pad_front{};
  std::size_t batch = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;

  std::size_t rows() const { return batch * out[0] * out[1] * out[2]; }
  std::size_t cols() const { return kernel[0] * kernel[1] * kernel[2] * in_channels; }
};

inline Conv3dGeometry conv3d_geometry(const Shape& x, const Shape& w, Padding padding) {
  detail::require(x.size() == 5, "conv3d: input must be [batch, d1, d2, d3, channels], got " + to_string(x));
  detail::require(w.size() == 5, "conv3d: kernel must be [k1, k2, k3, in, out]");
  detail::require(x[4] == w[3], "conv3d: input has " + std::to_string(x[4]) + " channels, kernel expects " +
                                    std::to_string(w[3]));
  Conv3dGeometry g;
  g.batch = x[0];
  g.in_channels = x[4];
  g.out_channels = w[4];
  for (std::size_t i = 0; i < 3; ++i) {
    g.in[i] = x[i + 1];
    g.kernel[i] = w[i];
    if (padding == Padding::Valid) {
      detail::require(g.kernel[i] <= g.in[i], "conv3d: valid kernel " + to_string(w) + " larger than input " + to_string(x));
      g.out[i] = g.in[i] - g.kernel[i] + 1;
      g.pad_front[i] = 0;
    } else {
      g.out[i] = g.in[i];
      g.pad_front[i] = (g.kernel[i] - 1) / 2;
    }
  }
  return g;
}

namespace detail {

template <typename S>
void im2col(const S* x, const Conv3dGeometry& g, S* col) {
  const std::size_t c = g.in_channels;
  const std::size_t cols = g.cols();
  std::size_t row = 0;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t o1 = 0; o1 < g.out[0]; ++o1) {
      for (std::size_t o2 = 0; o2 < g.out[1]; ++o2) {
        for (std::size_t o3 = 0; o3 < g.out[2]; ++o3, ++row) {
          S* dst = col + row * cols;
          for (std::size_t a = 0; a < g.kernel[0]; ++a) {
            const auto i1 = static_cast<std::ptrdiff_t>(o1 + a) - static_cast<std::ptrdiff_t>(g.pad_front[0]);
            for (std::size_t b = 0; b < g.kernel[1]; ++b) {
              const auto i2 = static_cast<std::ptrdiff_t>(o2 + b) - static_cast<std::ptrdiff_t>(g.pad_front[1]);
              for (std::size_t k = 0; k < g.kernel[2]; ++k, dst += c) {
                const auto i3 = static_cast<std::ptrdiff_t>(o3 + k) - static_cast<std::ptrdiff_t>(g.pad_front[2]);
                if (i1 < 0 || i2 < 0 || i3 < 0 || i1 >= static_cast<std::ptrdiff_t>(g.in[0]) ||
                    i2 >= static_cast<std::ptrdiff_t>(g.in[1]) || i3 >= static_cast<std::ptrdiff_t>(g.in[2])) {
                  std::fill_n(dst, c, S{0});
                  continue;
                }
                const std::size_t src =
                    (((n * g.in[0] + static_cast<std::size_t>(i1)) * g.in[1] + static_cast<std::size_t>(i2)) * g.in[2] +
                     static_cast<std::size_t>(i3)) *
                    c;
                std::copy_n(x + src, c, dst);
              }
            }
          }
        }
      }
    }
  }
}

template <typename S>
void col2im_add(const S* col, const Conv3dGeometry& g, S* dx) {
  const std::size_t c = g.in_channels;
  const std::size_t cols = g.cols();
  std::size_t row = 0;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t o1 = 0; o1 < g.out[0]; ++o1) {
      for (std::size_t o2 = 0; o2 < g.out[1]; ++o2) {
        for (std::size_t o3 = 0; o3 < g.out[2]; ++o3, ++row) {
          const S* src = col + row * cols;
          for (std::size_t a = 0; a < g.kernel[0]; ++a) {
            const auto i1 = static_cast<std::ptrdiff_t>(o1 + a) - static_cast<std::ptrdiff_t>(g.pad_front[0]);
            for (std::size_t b = 0; b < g.kernel[1]; ++b) {
              const auto i2 = static_cast<std::ptrdiff_t>(o2 + b) - static_cast<std::ptrdiff_t>(g.pad_front[1]);
              for (std::size_t k = 0; k < g.kernel[2]; ++k, src += c) {
                const auto i3 = static_cast<std::ptrdiff_t>(o3 + k) - static_cast<std::ptrdiff_t>(g.pad_front[2]);
                if (i1 < 0 || i2 < 0 || i3 < 0 || i1 >= static_cast<std::ptrdiff_t>(g.in[0]) ||
                    i2 >= static_cast<std::ptrdiff_t>(g.in[1]) || i3 >= static_cast<std::ptrdiff_t>(g.in[2])) {
                  continue;
                }
                S* dst = dx + (((n * g.in[0] + static_cast<std::size_t>(i1)) * g.in[1] + static_cast<std::size_t>(i2)) *
                                   g.in[2] +
                               static_cast<std::size_t>(i3)) *
                                  c;
                for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

/// 3D cross-correlation (no kernel flip), stride 1.
/// x [B, D1, D2, D3, Cin], weights [k1, k2, k3, Cin, Cout], bias [Cout].
template <typename S>
Var<S> conv3d(Var<S> x, Var<S> weights, Var<S> bias, Padding padding) {
  const Conv3dGeometry g = conv3d_geometry(x.shape(), weights.shape(), padding);
  detail::require(bias.value().size() == g.out_channels, "conv3d: bias size mismatch");
  const auto rows = static_cast<Eigen::Index>(g.rows());
  const auto cols = static_cast<Eigen::Index>(g.cols());
  const auto outc = static_cast<Eigen::Index>(g.out_channels);

  // A 1x1x1 kernel reads the input directly.
  const bool pointwise = g.kernel == std::array<std::size_t, 3>{1, 1, 1};
  auto col = std::make_shared<AlignedVector<S>>();
  const S* col_data = x.value().data();
  if (!pointwise) {
    col->resize(g.rows() * g.cols());
    detail::im2col(x.value().data(), g, col->data());
    col_data = col->data();
  }

  Tensor<S> out({g.batch, g.out[0], g.out[1], g.out[2], g.out_channels});
  detail::MatrixMap<S> y(out.data(), rows, outc);
  y.noalias() = detail::ConstMatrixMap<S>(col_data, rows, cols) *
                detail::ConstMatrixMap<S>(weights.value().data(), cols, outc);
  y.rowwise() += Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(bias.value().data(), outc);

  if (!x.needs_grad() && !weights.needs_grad() && !bias.needs_grad()) col.reset();
  return x.tape().record(std::move(out), {x, weights, bias},
                         [x, weights, bias, g, col, pointwise, rows, cols, outc](Tape<S>& t, std::size_t self) {
    detail::ConstMatrixMap<S> gy(t.grad(self).data(), rows, outc);
    const S* col_data = pointwise ? t.value(x.id()).data() : col->data();
    if (weights.needs_grad()) {
      detail::MatrixMap<S>(t.grad(weights.id()).data(), cols, outc).noalias() +=
          detail::ConstMatrixMap<S>(col_data, rows, cols).transpose() * gy;
    }
    if (bias.needs_grad()) {
      Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>>(t.grad(bias.id()).data(), outc) += gy.colwise().sum();
    }
    if (x.needs_grad()) {
      const auto w = detail::ConstMatrixMap<S>(t.value(weights.id()).data(), cols, outc);
      if (pointwise) {
        detail::MatrixMap<S>(t.grad(x.id()).data(), rows, cols).noalias() += gy * w.transpose();
      } else {
        AlignedVector<S> dcol(static_cast<std::size_t>(rows * cols));
        detail::MatrixMap<S>(dcol.data(), rows, cols).noalias() = gy * w.transpose();
        detail::col2im_add(dcol.data(), g, t.grad(x.id()).data());
      }
    }
  });
}

struct BatchNormOptions {
  double epsilon = 1e-3;
  double momentum = 0.99;
};

/// Channel-last batch normalization. Training mode normalizes with the batch
/// statistics and updates the running buffers; inference uses the buffers.
template <typename S>
Var<S> batch_norm(Var<S> x, Var<S> gamma, Var<S> beta, Parameter<S>& running_mean, Parameter<S>& running_var,
                  bool training, BatchNormOptions options = {}) {
  const std::size_t c = x.shape().back();
  detail::require(gamma.value().size() == c && beta.value().size() == c, "batch_norm: parameter size mismatch");
  const std::size_t n = x.value().size() / c;
  const auto& xv = x.value();
  const S eps = static_cast<S>(options.epsilon);

  std::vector<S> mean(c, S{0});
  std::vector<S> var(c, S{0});
  if (training) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t ch = 0; ch < c; ++ch) mean[ch] += xv[i * c + ch];
    }
    for (auto& m : mean) m /= static_cast<S>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const S d = xv[i * c + ch] - mean[ch];
        var[ch] += d * d;
      }
    }
    for (auto& v : var) v /= static_cast<S>(n);
    const S mom = static_cast<S>(options.momentum);
    for (std::size_t ch = 0; ch < c; ++ch) {
      running_mean.value[ch] = mom * running_mean.value[ch] + (S{1} - mom) * mean[ch];
      running_var.value[ch] = mom * running_var.value[ch] + (S{1} - mom) * var[ch];
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = running_mean.value[ch];
      var[ch] = running_var.value[ch];
    }
  }

  auto inv_std = std::make_shared<std::vector<S>>(c);
  for (std::size_t ch = 0; ch < c; ++ch) (*inv_std)[ch] = S{1} / std::sqrt(var[ch] + eps);
  auto xhat = std::make_shared<Tensor<S>>(x.shape());
  Tensor<S> out(x.shape());
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const S h = (xv[i * c + ch] - mean[ch]) * (*inv_std)[ch];
      (*xhat)[i * c + ch] = h;
      out[i * c + ch] = gv[ch] * h + bv[ch];
    }
  }
  return x.tape().record(std::move(out), {x, gamma, beta}, [=](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    std::vector<S> sum_g(c, S{0});
    std::vector<S> sum_gh(c, S{0});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        sum_g[ch] += g[i * c + ch];
        sum_gh[ch] += g[i * c + ch] * (*xhat)[i * c + ch];
      }
    }
    if (gamma.needs_grad()) {
      auto& gg = t.grad(gamma.id());
      for (std::size_t ch = 0; ch < c; ++ch) gg[ch] += sum_gh[ch];
    }
    if (beta.needs_grad()) {
      auto& gb = t.grad(beta.id());
      for (std::size_t ch = 0; ch < c; ++ch) gb[ch] += sum_g[ch];
    }
    if (x.needs_grad()) {
      auto& gx = t.grad(x.id());
      const auto& gam = t.value(gamma.id());
      if (training) {
        const S inv_n = S{1} / static_cast<S>(n);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t k = i * c + ch;
            gx[k] += gam[ch] * (*inv_std)[ch] * (g[k] - inv_n * sum_g[ch] - (*xhat)[k] * inv_n * sum_gh[ch]);
          }
        }
      } else {
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t ch = 0; ch < c; ++ch) gx[i * c + ch] += g[i * c + ch] * gam[ch] * (*inv_std)[ch];
        }
      }
    }
  });
}

/// Inverted dropout: survivors are scaled by 1/(1-rate); identity when not
/// training or rate == 0. The mask comes from the tape's generator.
template <typename S>
Var<S> dropout(Var<S> x, double rate, bool training) {
  if (!training || rate <= 0.0) return x;
  detail::require(rate < 1.0, "dropout: rate must be < 1");
  auto& rng = x.tape().rng();
  const S scale = static_cast<S>(1.0 / (1.0 - rate));
  auto mask = std::make_shared<std::vector<S>>(x.value().size());
  Tensor<S> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = detail::uniform01(rng) < rate ? S{0} : scale;
    out[i] = x.value()[i] * (*mask)[i];
  }
  return x.tape().record(std::move(out), {x}, [x, mask](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(x.id());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*mask)[i];
  });
}

inline constexpr double kProbabilityClamp = 1e-7;

/// Mean over the batch of -[w_pos*y*ln p + w_neg*(1-y)*ln(1-p)] with p
/// clamped to [1e-7, 1-1e-7]. `probs` holds one probability per label.
template <typename S>
Var<S> bce_loss_weighted(Var<S> probs, std::span<const S> labels, double w_pos, double w_neg) {
  detail::require(probs.value().size() == labels.size(), "bce: probability/label count mismatch");
  const std::size_t n = labels.size();
  const S lo = static_cast<S>(kProbabilityClamp);
  const S hi = S{1} - lo;
  const S wp = static_cast<S>(w_pos);
  const S wn = static_cast<S>(w_neg);
  S total{0};
  const auto& p = probs.value();
  for (std::size_t i = 0; i < n; ++i) {
    const S q = std::clamp(p[i], lo, hi);
    total -= wp * labels[i] * std::log(q) + wn * (S{1} - labels[i]) * std::log(S{1} - q);
  }
  std::vector<S> y(labels.begin(), labels.end());
  return probs.tape().record(Tensor<S>({1}, std::vector<S>{total / static_cast<S>(n)}), {probs},
                             [probs, y, lo, hi, wp, wn, n](Tape<S>& t, std::size_t self) {
    const S g = t.grad(self)[0] / static_cast<S>(n);
    const auto& pv = t.value(probs.id());
    auto& gp = t.grad(probs.id());
    for (std::size_t i = 0; i < n; ++i) {
      if (pv[i] < lo || pv[i] > hi) continue;
      gp[i] += g * (-wp * y[i] / pv[i] + wn * (S{1} - y[i]) / (S{1} - pv[i]));
    }
  });
}

}  // namespace cyclesense::nn
