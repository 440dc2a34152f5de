#include "nestor/numerics/tape.h"

#include "nestor/error.h"

namespace nestor::numerics {

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

double Var::item() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw DimensionError("item() needs a [1, 1] value, got " + shape_string(v));
  }
  return v(0, 0);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::leaf(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = grad_enabled_;
  return push(std::move(n));
}

Var Tape::param(Param& p) {
  auto it = param_ids_.find(&p);
  if (it != param_ids_.end()) return Var(this, it->second);
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = grad_enabled_ && p.trainable;
  Var v = push(std::move(n));
  param_ids_.emplace(&p, v.id());
  param_nodes_.push_back(v.id());
  return v;
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  Node n;
  n.value = std::move(value);
  if (grad_enabled_) {
    for (const Var& in : inputs) {
      if (in.tape() != this) throw InvariantError("op mixes variables from different tapes");
      if (nodes_[in.id()].requires_grad) n.requires_grad = true;
    }
    if (n.requires_grad) n.backward = std::move(backward);
  }
  return push(std::move(n));
}

Var Tape::record(Matrix value, const std::vector<Var>& inputs, Backward backward) {
  Node n;
  n.value = std::move(value);
  if (grad_enabled_) {
    for (const Var& in : inputs) {
      if (in.tape() != this) throw InvariantError("op mixes variables from different tapes");
      if (nodes_[in.id()].requires_grad) n.requires_grad = true;
    }
    if (n.requires_grad) n.backward = std::move(backward);
  }
  return push(std::move(n));
}

Matrix& Tape::grad_slot(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0 && n.value.size() != 0) n.grad.setZero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var out) {
  if (!grad_enabled_) throw InvariantError("backward() on a tape with gradients disabled");
  if (out.tape() != this) throw InvariantError("backward() on a foreign variable");
  const Matrix& v = value(out.id());
  if (v.rows() != 1 || v.cols() != 1) {
    throw DimensionError("backward() needs a scalar [1, 1] output, got " + shape_string(v));
  }
  if (!nodes_[out.id()].requires_grad) return;
  grad_slot(out.id())(0, 0) += 1.0;
  for (int id = out.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.backward || n.grad.size() == 0) continue;
    n.backward(*this, id);
  }
}

void Tape::accumulate_param_grads() const {
  for (int id : param_nodes_) {
    const Node& n = nodes_[id];
    if (n.grad.size() == 0) continue;
    n.param->grad += n.grad;
  }
}

void Tape::for_each_param_grad(const std::function<void(Param&, const Matrix&)>& fn) const {
  for (int id : param_nodes_) {
    const Node& n = nodes_[id];
    if (n.grad.size() == 0) continue;
    fn(*n.param, n.grad);
  }
}

}  // namespace nestor::numerics
