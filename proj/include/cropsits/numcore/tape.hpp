#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "cropsits/numcore/tensor.hpp"

namespace cropsits::num {

template <typename Scalar>
class Tape;

// Handle to one node of a tape. Valid only while its tape is alive; a tape
// is rebuilt for every forward pass.
template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  int id = -1;

  const Tensor<Scalar>& value() const { return tape->value(id); }
  const Shape& shape() const { return value().shape(); }
  Index dim(int axis) const { return value().dim(axis); }
};

// Append-only record of primitive operations. Nodes are appended in
// execution order, so inputs always precede the operations that use them
// and a single reverse sweep visits each node exactly once.
template <typename Scalar>
class Tape {
 public:
  using PullFn = std::function<void(Tape&, const Tensor<Scalar>& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Tracked input. The node's gradient buffer is the tensor's own, so the
  // caller's handle sees gradients after backward(). Tensors without
  // requires_grad are recorded as constants.
  Var<Scalar> leaf(Tensor<Scalar>& t) {
    if (!t.requires_grad()) return constant(t);
    t.ensure_grad();
    nodes_.push_back(Node{t, t.grad_view(), true, nullptr});
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  Var<Scalar> constant(Tensor<Scalar> t) {
    nodes_.push_back(Node{std::move(t), Tensor<Scalar>{}, false, nullptr});
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  // Record an op result. `tracked` marks whether any input is tracked;
  // untracked nodes drop their pull function.
  Var<Scalar> record(Tensor<Scalar> value, bool tracked, PullFn pull) {
    nodes_.push_back(Node{std::move(value), Tensor<Scalar>{}, tracked,
                          tracked ? std::move(pull) : PullFn{}});
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor<Scalar>& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool tracked(int id) const { return nodes_[static_cast<std::size_t>(id)].tracked; }
  std::size_t node_count() const { return nodes_.size(); }

  // Gradient accumulator of a node; nullptr when the node is untracked.
  // Allocated zero-filled on first use.
  Tensor<Scalar>* grad_if_tracked(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.tracked) return nullptr;
    if (!n.grad.defined()) n.grad = Tensor<Scalar>(n.value.shape());
    return &n.grad;
  }

  // Reverse sweep from a scalar loss. Gradients of repeated uses
  // accumulate additively. May be called once per tape.
  void backward(const Var<Scalar>& loss) {
    if (loss.tape != this) throw ContractError("backward: loss from another tape");
    const Tensor<Scalar>& lv = value(loss.id);
    if (!lv.is_scalar())
      throw ContractError("backward: loss must be scalar, got shape " + shape_str(lv.shape()));
    if (Tensor<Scalar>* g = grad_if_tracked(loss.id)) {
      g->data()[0] += Scalar(1);
      for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.tracked && n.grad.defined() && n.pull) n.pull(*this, n.grad);
      }
    }
  }

 private:
  struct Node {
    Tensor<Scalar> value;
    Tensor<Scalar> grad;  // undefined until pulled; leaves share the tensor's buffer
    bool tracked = false;
    PullFn pull;  // adds this node's grad into its parents
  };

  std::vector<Node> nodes_;
};

}  // namespace cropsits::num
