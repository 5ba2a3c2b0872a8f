// Copyright 2026 The DOS-SID Authors
// SPDX-License-Identifier: Apache-2.0

#include "dos/graph.hpp"

#include <cmath>
#include <sstream>

#include "dos/error.hpp"

namespace dos {

ParamPtr make_parameter(std::string name, Tensor value) {
  return std::make_shared<Parameter>(Parameter{std::move(name), std::move(value)});
}

const Tensor& Var::value() const {
  if (graph == nullptr) throw ContractViolation("Var is not bound to a graph");
  return graph->value(*this);
}

const Tensor& Gradients::at(Var v) const {
  auto it = by_node_.find(v.id);
  if (it == by_node_.end()) throw ContractViolation("no gradient recorded for node");
  return it->second;
}

const Tensor& Gradients::at(const Parameter& p) const {
  auto it = by_param_.find(&p);
  if (it == by_param_.end()) throw ContractViolation("no gradient recorded for parameter " + p.name);
  return by_node_.at(it->second);
}

void Gradients::insert(std::size_t node, const Parameter* param, Tensor grad) {
  by_node_.insert_or_assign(node, std::move(grad));
  if (param != nullptr) by_param_.insert_or_assign(param, node);
}

Var Graph::constant(Tensor value, std::string op) {
  nodes_.push_back(Node{std::move(op), {}, std::move(value), nullptr, nullptr, false});
  return Var{this, nodes_.size() - 1};
}

Var Graph::param(const ParamPtr& p) {
  if (!p) throw ContractViolation("null parameter");
  if (auto it = param_nodes_.find(p.get()); it != param_nodes_.end()) return Var{this, it->second};
  nodes_.push_back(Node{"param:" + p->name, {}, p->value, nullptr, p.get(), true});
  param_nodes_.emplace(p.get(), nodes_.size() - 1);
  params_.push_back(p);
  return Var{this, nodes_.size() - 1};
}

Var Graph::add_node(std::string op, std::vector<Var> inputs, Tensor value, BackwardFn backward) {
  Node node;
  node.op = std::move(op);
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (in.graph != this) throw ContractViolation(node.op + ": input belongs to a different graph");
    if (in.id >= nodes_.size()) throw ContractViolation(node.op + ": dangling input");
    node.inputs.push_back(in.id);
    node.requires_grad = node.requires_grad || nodes_[in.id].requires_grad;
  }
  if (!backward) node.requires_grad = false;
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Graph::add_node(std::string op, std::vector<Var> inputs, std::size_t rows, std::size_t cols,
                    std::vector<double> value, BackwardFn backward) {
  Tensor t;
  try {
    t = Tensor(rows, cols, std::move(value));
  } catch (const NumericError& e) {
    std::ostringstream msg;
    msg << "node " << nodes_.size() << " (" << op << "): " << e.what();
    throw NumericError(msg.str());
  }
  return add_node(std::move(op), std::move(inputs), std::move(t), std::move(backward));
}

Gradients Graph::backward(Var seed) const {
  if (seed.graph != this) throw ContractViolation("backward: seed belongs to a different graph");
  const Node& root = nodes_.at(seed.id);
  if (root.value.size() != 1) throw ContractViolation("backward: seed node '" + root.op + "' is not scalar");

  std::vector<std::vector<double>> grads(seed.id + 1);
  grads[seed.id] = {1.0};
  std::vector<double*> in_ptrs;

  for (std::size_t i = seed.id + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (grads[i].empty() || !node.requires_grad) continue;
    for (double g : grads[i]) {
      if (!std::isfinite(g)) {
        std::ostringstream msg;
        msg << "non-finite gradient at node " << i << " (" << node.op << ")";
        throw NumericError(msg.str());
      }
    }
    if (!node.backward) continue;
    in_ptrs.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const std::size_t in = node.inputs[k];
      if (!nodes_[in].requires_grad) continue;
      if (grads[in].empty()) grads[in].assign(nodes_[in].value.size(), 0.0);
      in_ptrs[k] = grads[in].data();
    }
    node.backward(grads[i], in_ptrs);
  }

  Gradients out;
  for (std::size_t i = 0; i <= seed.id; ++i) {
    const Node& node = nodes_[i];
    if (node.param == nullptr) continue;
    if (grads[i].empty()) grads[i].assign(node.value.size(), 0.0);
    out.insert(i, node.param, Tensor(node.value.rows(), node.value.cols(), std::move(grads[i])));
  }
  return out;
}

void Graph::set_freeze(std::shared_ptr<FreezeTape> tape, FreezeMode mode) {
  if (mode != FreezeMode::off && !tape) throw ContractViolation("freeze mode requires a tape");
  tape_ = std::move(tape);
  freeze_mode_ = mode;
  if (mode == FreezeMode::replay) tape_->cursor = 0;
}

Tensor Graph::frozen(Tensor current) {
  switch (freeze_mode_) {
    case FreezeMode::off:
      return current;
    case FreezeMode::record:
      tape_->values.push_back(current);
      return current;
    case FreezeMode::replay: {
      if (tape_->cursor >= tape_->values.size()) throw ContractViolation("freeze tape exhausted on replay");
      const Tensor& rec = tape_->values[tape_->cursor++];
      if (rec.shape() != current.shape()) throw ContractViolation("freeze tape shape mismatch on replay");
      return rec;
    }
  }
  return current;
}

ForwardBackward forward_backward(const Graph& graph, Var seed) {
  Gradients grads = graph.backward(seed);
  return ForwardBackward{graph.value(seed), std::move(grads)};
}

}  // namespace dos
