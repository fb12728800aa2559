#include "vmdnet/nn/tape.hpp"

#include "vmdnet/error.hpp"

namespace vmdnet::nn {

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.op = "constant";
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::param(ParamStore& store, const std::string& name) {
  Parameter& p = store.at(name);
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  n.op = "param";
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::push(Tensor value, std::initializer_list<Var> inputs, Backward backward, const char* op) {
  return push(std::move(value), std::vector<Var>(inputs), std::move(backward), op);
}

Var Tape::push(Tensor value, const std::vector<Var>& inputs, Backward backward, const char* op) {
  check_finite(value, op);
  Node n;
  n.value = std::move(value);
  n.op = op;
  for (const Var& v : inputs) {
    if (v.tape != this) fail(ErrorCode::InvalidConfig, std::string(op) + ": input from another tape");
    n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Tensor* Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape);
  return &n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) fail(ErrorCode::InvalidConfig, "backward: loss from another tape");
  if (nodes_[loss.id].value.size() != 1)
    fail(ErrorCode::ShapeMismatch, "backward: loss must have one element, got shape " +
                                       shape_string(nodes_[loss.id].value.shape));
  if (Tensor* g = grad_slot(loss.id)) g->data[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    check_finite(n.grad, n.op);
    if (n.backward) n.backward(*this, i);
    if (n.param) {
      auto& dst = n.param->grad.data;
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += n.grad.data[j];
    }
  }
  clear();
}

}  // namespace vmdnet::nn
