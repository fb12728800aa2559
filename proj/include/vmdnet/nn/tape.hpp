#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "vmdnet/nn/tensor.hpp"

namespace vmdnet::nn {

class Tape;

/// Handle to a node on a Tape. Invalid once the tape is cleared.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
};

/// Define-by-run reverse-mode tape. Nodes are appended by ops; backward()
/// walks them in reverse, adds parameter gradients into their ParamStore and
/// frees the graph.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Var constant(Tensor value);
  /// Leaf bound to a store entry; gradients are added to its grad slot.
  Var param(ParamStore& store, const std::string& name);

  /// Appends an op result. `inputs` decide whether the node needs a gradient;
  /// `backward` is only kept when it does.
  Var push(Tensor value, std::initializer_list<Var> inputs, Backward backward, const char* op);
  Var push(Tensor value, const std::vector<Var>& inputs, Backward backward, const char* op);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of a node, zero-initialised on first use; nullptr when the
  /// node does not need a gradient.
  Tensor* grad_slot(std::size_t id);
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }

  /// Seeds d(loss)/d(loss) = 1 for a single-element loss and propagates.
  /// The tape is cleared afterwards.
  void backward(Var loss);
  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
    Parameter* param = nullptr;
    const char* op = "";
  };
  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

}  // namespace vmdnet::nn
