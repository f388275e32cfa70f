#include "mixtea/tape.hpp"

namespace mixtea {

Var Tape::constant(Tensor value) {
  require_finite(value, "constant");
  nodes_.push_back(Node{std::move(value), std::nullopt, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Tensor value) {
  require_finite(value, "parameter");
  nodes_.push_back(Node{std::move(value), std::nullopt, nullptr, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backward backward,
                 const char* op) {
  require_finite(value, op);
  bool needs = false;
  for (const auto& in : inputs) {
    if (in.tape_ != this) throw std::logic_error(std::string(op) + ": input from another tape");
    needs = needs || nodes_.at(in.id_).requires_grad;
  }
  nodes_.push_back(Node{std::move(value), std::nullopt, needs ? std::move(backward) : nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

Tensor Tape::grad(const Var& v) const {
  const auto& node = nodes_.at(v.id());
  if (node.grad) return *node.grad;
  return Tensor(node.value.rows(), node.value.cols());
}

Tensor& Tape::grad_buffer(const Var& v) {
  auto& node = nodes_.at(v.id());
  if (!node.grad) node.grad.emplace(node.value.rows(), node.value.cols());
  return *node.grad;
}

void Tape::backward(const Var& loss) {
  auto& root = nodes_.at(loss.id());
  if (root.value.size() != 1) {
    throw ShapeError("backward needs a scalar loss, got " + root.value.shape_string());
  }
  for (auto& node : nodes_) node.grad.reset();
  root.grad.emplace(1, 1, 1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (!node.grad || !node.backward) continue;
    node.backward(*this, node.value, *node.grad);
  }
}

}  // namespace mixtea
