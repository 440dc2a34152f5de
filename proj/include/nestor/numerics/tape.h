#ifndef NESTOR_NUMERICS_TAPE_H_
#define NESTOR_NUMERICS_TAPE_H_

#include <functional>
#include <unordered_map>
#include <vector>

#include "nestor/numerics/matrix.h"
#include "nestor/numerics/param.h"

namespace nestor::numerics {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the
// tape is alive.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  // Accumulated gradient after Tape::backward. Empty for values that do
  // not require a gradient.
  const Matrix& grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  // Scalar value of a 1 x 1 variable.
  double item() const;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Reverse-mode recording of one forward computation. A tape is built once,
// differentiated once, and discarded; it is not thread-safe, but distinct
// tapes over the same ParamStore may run concurrently as long as nobody
// writes parameter values meanwhile.
class Tape {
 public:
  // Propagates gradient from node `self` into its inputs.
  using Backward = std::function<void(Tape& tape, int self)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  // Value that never receives a gradient.
  Var constant(Matrix value);
  // Differentiable input (gradient is readable after backward).
  Var leaf(Matrix value);
  // Leaf bound to a parameter; repeated calls return the same node so that
  // every use accumulates into one gradient.
  Var param(Param& p);

  // Records the result of an op. `backward` is dropped when no input needs
  // a gradient or the tape has gradients disabled.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Matrix value, const std::vector<Var>& inputs, Backward backward);

  // Seeds d(out)/d(out) = 1 on a 1 x 1 variable and runs every recorded
  // backward function in reverse order.
  void backward(Var out);

  const Matrix& value(int id) const { return nodes_[id].value; }
  const Matrix& grad(int id) const { return nodes_[id].grad; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  // Gradient slot of a node, zero-initialized on first access.
  Matrix& grad_slot(int id);

  // Adds every parameter-leaf gradient into Param::grad.
  void accumulate_param_grads() const;
  // Visits (param, gradient) pairs in first-use order.
  void for_each_param_grad(const std::function<void(Param&, const Matrix&)>& fn) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    Param* param = nullptr;
    bool requires_grad = false;
  };

  Var push(Node node);

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::vector<int> param_nodes_;
  std::unordered_map<const Param*, int> param_ids_;
};

}  // namespace nestor::numerics

#endif  // NESTOR_NUMERICS_TAPE_H_
