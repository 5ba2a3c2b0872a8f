// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dos/tensor.hpp"

namespace dos {

/// A named trainable tensor. Models hold parameters through shared pointers,
/// so two modules referencing the same Parameter share storage.
struct Parameter {
  std::string name;
  Tensor value;
};
using ParamPtr = std::shared_ptr<Parameter>;

ParamPtr make_parameter(std::string name, Tensor value);

class Graph;

/// Handle to a node of a Graph.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Values recorded on one pass and replayed on later passes.
///
/// Stop-gradient outputs and discrete decisions (top-k masks, nearest-code
/// indices) go through the tape. Replaying lets a finite-difference probe
/// evaluate the exact surrogate whose derivative the straight-through
/// composition reports.
struct FreezeTape {
  std::vector<Tensor> values;
  std::size_t cursor = 0;
};

enum class FreezeMode { off, record, replay };

/// Gradients of a scalar seed with respect to the parameter nodes it reaches.
class Gradients {
 public:
  bool contains(Var v) const { return by_node_.count(v.id) != 0; }
  bool contains(const Parameter& p) const { return by_param_.count(&p) != 0; }
  const Tensor& at(Var v) const;
  const Tensor& at(const Parameter& p) const;
  std::size_t size() const { return by_node_.size(); }

  void insert(std::size_t node, const Parameter* param, Tensor grad);

 private:
  std::unordered_map<std::size_t, Tensor> by_node_;
  std::unordered_map<const Parameter*, std::size_t> by_param_;
};

/// Eagerly evaluated reverse-mode tape. Nodes are appended in creation order,
/// which is also a valid topological order.
class Graph {
 public:
  /// Accumulates into grad_in[i] (nullptr when input i needs no gradient).
  using BackwardFn = std::function<void(std::span<const double> grad_out, std::span<double* const> grad_in)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value, std::string op = "constant");
  /// One leaf per Parameter per graph; repeated calls return the same node.
  Var param(const ParamPtr& p);

  Var add_node(std::string op, std::vector<Var> inputs, Tensor value, BackwardFn backward);
  /// Convenience overload; wraps NumericError with the op name.
  Var add_node(std::string op, std::vector<Var> inputs, std::size_t rows, std::size_t cols,
               std::vector<double> value, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  const std::string& op(Var v) const { return nodes_.at(v.id).op; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  Gradients backward(Var seed) const;

  void set_freeze(std::shared_ptr<FreezeTape> tape, FreezeMode mode);
  FreezeMode freeze_mode() const { return freeze_mode_; }
  /// Passes `current` through the freeze tape (record / replay / passthrough).
  Tensor frozen(Tensor current);

 private:
  struct Node {
    std::string op;
    std::vector<std::size_t> inputs;
    Tensor value;
    BackwardFn backward;
    const Parameter* param = nullptr;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  std::vector<ParamPtr> params_;  // keeps cached addresses from being reused
  std::shared_ptr<FreezeTape> tape_;
  FreezeMode freeze_mode_ = FreezeMode::off;
};

struct ForwardBackward {
  Tensor value;
  Gradients grads;
};

/// Value of a scalar seed together with its parameter gradients.
ForwardBackward forward_backward(const Graph& graph, Var seed);

}  // namespace dos
