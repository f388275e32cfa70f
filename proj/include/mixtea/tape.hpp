#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>

#include "mixtea/tensor.hpp"

namespace mixtea {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives
// and has not been cleared.
class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Records operations in execution order (which is a topological order) and
// replays them backwards to accumulate gradients.
class Tape {
 public:
  // Receives the node's forward value and its accumulated gradient; pushes
  // contributions to the inputs via grad_buffer().
  using Backward = std::function<void(Tape&, const Tensor& value, const Tensor& grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(Tensor value);
  Var record(Tensor value, std::span<const Var> inputs, Backward backward, const char* op);
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward, const char* op) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(backward), op);
  }

  const Tensor& value(const Var& v) const { return nodes_.at(v.id()).value; }
  bool requires_grad(const Var& v) const { return nodes_.at(v.id()).requires_grad; }

  // Gradient after backward(); a zero tensor when the node was not reached.
  Tensor grad(const Var& v) const;

  // Mutable gradient accumulator for `v`, zero-initialised on first use.
  Tensor& grad_buffer(const Var& v);

  // Seeds d(loss)/d(loss) = 1 and propagates; loss must be 1x1.
  void backward(const Var& loss);

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::optional<Tensor> grad;
    Backward backward;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(*this); }

}  // namespace mixtea
