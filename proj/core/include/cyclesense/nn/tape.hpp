#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cyclesense/nn/tensor.hpp"

namespace cyclesense::nn {

/// A named model tensor. Buffers (trainable == false) such as batch-norm
/// running statistics are stored and checkpointed but never optimized.
template <typename S>
struct Parameter {
  std::string name;
  Tensor<S> value;
  Tensor<S> grad;
  bool trainable = true;
  bool frozen = false;

  bool optimizable() const { return trainable && !frozen; }
  void zero_grad() {
    if (grad.shape() != value.shape()) {
      grad = Tensor<S>(value.shape());
    } else {
      grad.fill(S{0});
    }
  }
};

/// Owns the parameters of one model. Pointers handed out stay valid for the
/// lifetime of the set.
template <typename S>
class ParameterSet {
 public:
  Parameter<S>& add(std::string name, Tensor<S> init, bool trainable = true) {
    for (const auto& p : params_) {
      if (p->name == name) throw std::invalid_argument("duplicate parameter name: " + name);
    }
    auto p = std::make_unique<Parameter<S>>();
    p->name = std::move(name);
    p->value = std::move(init);
    p->grad = Tensor<S>(p->value.shape());
    p->trainable = trainable;
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Parameter<S>* find(const std::string& name) {
    for (auto& p : params_) {
      if (p->name == name) return p.get();
    }
    return nullptr;
  }

  std::vector<Parameter<S>*> all() {
    std::vector<Parameter<S>*> out;
    for (auto& p : params_) out.push_back(p.get());
    return out;
  }
  std::vector<const Parameter<S>*> all() const {
    std::vector<const Parameter<S>*> out;
    for (const auto& p : params_) out.push_back(p.get());
    return out;
  }

  /// Parameters whose name starts with `prefix`.
  std::vector<Parameter<S>*> with_prefix(const std::string& prefix) {
    std::vector<Parameter<S>*> out;
    for (auto& p : params_) {
      if (p->name.starts_with(prefix)) out.push_back(p.get());
    }
    return out;
  }

  std::size_t size() const { return params_.size(); }

  /// Trainable plus frozen weights; buffers are excluded.
  std::size_t count_weights() const {
    std::size_t n = 0;
    for (const auto& p : params_) {
      if (p->trainable) n += p->value.size();
    }
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  std::vector<Tensor<S>> snapshot() const {
    std::vector<Tensor<S>> out;
    for (const auto& p : params_) out.push_back(p->value);
    return out;
  }
  void restore(const std::vector<Tensor<S>>& values) {
    if (values.size() != params_.size()) throw std::invalid_argument("snapshot size mismatch");
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i]->value = values[i];
  }

 private:
  std::vector<std::unique_ptr<Parameter<S>>> params_;
};

template <typename S>
class Tape;

/// Handle to a node on a tape.
template <typename S>
class Var {
 public:
  Var() = default;
  Var(Tape<S>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<S>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor<S>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  bool needs_grad() const { return tape_->needs_grad(id_); }

 private:
  Tape<S>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records executed operations in order; backward() replays them in exact
/// reverse order and accumulates gradients additively at fan-out.
template <typename S>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(std::uint64_t seed = 0) : rng_(seed) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<S> constant(Tensor<S> value) { return push(std::move(value), false, nullptr); }

  /// Leaf whose gradient can be read with grad() after backward().
  Var<S> input(Tensor<S> value) { return push(std::move(value), true, nullptr); }

  /// Leaf bound to a parameter: backward accumulates into parameter.grad
  /// unless the parameter is frozen or a buffer.
  Var<S> param(Parameter<S>& p) {
    const bool trainable = p.optimizable();
    Backward fn;
    if (trainable) {
      fn = [&p](Tape& tape, std::size_t self) {
        const auto& g = tape.nodes_[self].grad;
        if (p.grad.shape() != p.value.shape()) p.grad = Tensor<S>(p.value.shape());
        for (std::size_t i = 0; i < g.size(); ++i) p.grad[i] += g[i];
      };
    }
    return push(p.value, trainable, std::move(fn));
  }

  /// Result of an operation. The node needs a gradient iff any input does;
  /// `backward` is dropped otherwise.
  Var<S> record(Tensor<S> value, std::initializer_list<Var<S>> inputs, Backward backward) {
    bool needs = false;
    for (const auto& v : inputs) needs = needs || nodes_[v.id()].needs_grad;
    return push(std::move(value), needs, needs ? std::move(backward) : Backward{});
  }
  Var<S> record(Tensor<S> value, const std::vector<Var<S>>& inputs, Backward backward) {
    bool needs = false;
    for (const auto& v : inputs) needs = needs || nodes_[v.id()].needs_grad;
    return push(std::move(value), needs, needs ? std::move(backward) : Backward{});
  }

  const Tensor<S>& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  /// Gradient buffer of a node, allocated on first use.
  Tensor<S>& grad(std::size_t id) {
    auto& node = nodes_[id];
    if (node.grad.shape() != node.value.shape()) node.grad = Tensor<S>(node.value.shape());
    return node.grad;
  }
  const Tensor<S>& grad(Var<S> v) { return grad(v.id()); }
  bool has_grad(std::size_t id) const { return nodes_[id].grad.size() == nodes_[id].value.size(); }

  /// Seeds d(root)/d(root) = 1 for every element of root and propagates.
  void backward(Var<S> root) {
    auto& g = grad(root.id());
    g.fill(S{1});
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      auto& node = nodes_[i];
      if (!node.needs_grad || !node.backward || !has_grad(i)) continue;
      node.backward(*this, i);
    }
  }

  std::mt19937_64& rng() { return rng_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<S> value;
    Tensor<S> grad;
    bool needs_grad = false;
    Backward backward;
  };

  Var<S> push(Tensor<S> value, bool needs, Backward backward) {
    nodes_.push_back(Node{std::move(value), Tensor<S>(), needs, std::move(backward)});
    return Var<S>(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  std::mt19937_64 rng_;
};

}  // namespace cyclesense::nn
