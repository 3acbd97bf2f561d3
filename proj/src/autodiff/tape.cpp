#include "coralvol/autodiff.hpp"

namespace coralvol::ad {

const Tensor& Var::value() const {
  if (!tape) throw std::logic_error("Var is not attached to a tape");
  return tape->value(*this);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.op = "variable";
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  return record(op, std::move(value), std::vector<Var>(inputs), std::move(backward));
}

Var Tape::record(std::string_view op, Tensor value, const std::vector<Var>& inputs, Backward backward) {
  if (!value.all_finite())
    throw NumericError(std::string(op) + " produced a non-finite value");
  Node n;
  n.op = std::string(op);
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.tape != this) throw std::logic_error(std::string(op) + ": input from another tape");
    n.parents.push_back(in.id);
    n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

Tensor* Tape::grad_for(std::uint32_t id) {
  Node& n = nodes_.at(id);
  if (!n.requires_grad) return nullptr;
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape);
    n.has_grad = true;
  }
  return &n.grad;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.has_grad ? n.grad : Tensor(n.value.shape);
}

void Tape::backward(Var root) {
  if (root.tape != this) throw std::logic_error("backward: root from another tape");
  if (nodes_.at(root.id).value.size() != 1)
    throw ShapeError("backward root must hold one value, got " + shape_str(nodes_[root.id].value.shape));
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  Tensor* g = grad_for(root.id);
  if (!g) return;
  g->data[0] = 1.0;
  for (std::uint32_t id = root.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.backward) continue;
    // Closures only touch their parents' buffers, which precede this node.
    n.backward(*this, n.grad);
  }
}

}  // namespace coralvol::ad
