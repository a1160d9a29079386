#pragma once

#include "tssd/tensor.hpp"

#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tssd {

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t index = 0;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Records one forward pass as a list of nodes in topological order and
/// replays it in reverse to accumulate vector-Jacobian products.
///
/// A tape belongs to a single thread. Parameters are referenced, not copied,
/// and must outlive the tape; their gradients land in `Tensor::grad()` once
/// `backward` has run.
template <typename Scalar>
class Tape {
 public:
  using Array = typename Tensor<Scalar>::Array;
  /// Reads grad(out) and accumulates into the gradients of the node's inputs.
  using BackwardFn = std::function<void(Tape&, Var out)>;

  Var constant(Tensor<Scalar> value) {
    Node node;
    node.op = "constant";
    node.owned = std::move(value);
    node.requires_grad = false;
    return push(std::move(node));
  }

  Var parameter(Tensor<Scalar>& param) {
    Node node;
    node.op = "parameter";
    node.external = &param;
    node.param = &param;
    return push(std::move(node));
  }

  Var record(std::string_view op, Tensor<Scalar> value, BackwardFn backward) {
    if (!value.all_finite()) throw NonFiniteError(std::string(op) + ": produced a non-finite value");
    Node node;
    node.op = std::string(op);
    node.owned = std::move(value);
    node.backward = std::move(backward);
    return push(std::move(node));
  }

  const Tensor<Scalar>& value(Var v) const {
    const Node& node = nodes_.at(v.index);
    return node.external ? *node.external : node.owned;
  }
  const Shape& shape(Var v) const { return value(v).shape(); }

  /// Gradient of the recorded loss w.r.t. `v`; zero-initialised on first use.
  Array& grad(Var v) {
    Node& node = nodes_.at(v.index);
    if (node.grad.size() != value(v).size()) node.grad = Array::Zero(value(v).size());
    return node.grad;
  }
  bool has_grad(Var v) const { return nodes_.at(v.index).grad.size() > 0; }
  /// False for constants: backward functions may skip their input gradient.
  bool requires_grad(Var v) const { return nodes_.at(v.index).requires_grad; }

  std::size_t size() const { return nodes_.size(); }
  std::string_view op(Var v) const { return nodes_.at(v.index).op; }

  /// Smallest distance to a non-differentiable point seen during the forward
  /// pass (ReLU inputs near 0, near-ties inside pooling windows).
  Scalar kink_margin() const { return kink_margin_; }
  void note_kink_margin(Scalar margin) { kink_margin_ = std::min(kink_margin_, margin); }

  void backward(Var loss) {
    if (nodes_.empty()) throw std::logic_error("backward: nothing has been recorded");
    if (consumed_) throw std::logic_error("backward: tape already replayed");
    if (loss.index >= nodes_.size()) throw std::out_of_range("backward: unknown variable");
    if (value(loss).size() != 1) {
      throw std::invalid_argument("backward: seed must be a scalar, got shape " + shape_string(shape(loss)));
    }
    consumed_ = true;
    grad(loss).setOnes();
    for (std::size_t i = loss.index + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (node.grad.size() == 0) continue;
      if (node.backward) {
        node.backward(*this, Var{i});
      } else if (node.param != nullptr) {
        node.param->grad() += node.grad;
      }
    }
  }

 private:
  struct Node {
    std::string op;
    Tensor<Scalar> owned;
    const Tensor<Scalar>* external = nullptr;
    Tensor<Scalar>* param = nullptr;
    BackwardFn backward;
    Array grad;
    bool requires_grad = true;
  };

  Var push(Node node) {
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  Scalar kink_margin_ = std::numeric_limits<Scalar>::infinity();
  bool consumed_ = false;
};

}  // namespace tssd
