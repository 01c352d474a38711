#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "glab/tensor.hpp"

namespace glab {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives
// and has not been reset.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const;
  std::size_t id() const noexcept { return id_; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  double item() const { return value().item(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Local derivative of one recorded op. Receives the op's inputs, the gradient
// flowing into its output and a mask of which inputs need a gradient; returns
// one gradient per input (an invalid Var means "no contribution"). Rules are
// expressed with differentiable ops, so the tape can differentiate through a
// backward pass (gradients of gradients).
using BackwardRule = std::function<std::vector<Var>(std::span<const Var> inputs, const Var& grad,
                                                    std::span<const char> want)>;

// Ordered record of primitive operations. Node ids increase with creation, so
// the record is topologically sorted by construction and a reverse sweep
// visits every node after all of its consumers.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // A leaf takes part in differentiation iff value.requires_grad().
  Var leaf(Tensor value);
  Var constant(Tensor value);

  // Appends an op result. Inputs must live on this tape. The value is checked
  // for NaN/Inf. When recording is off, or no input needs a gradient, the node
  // is stored as a constant.
  Var record(Tensor value, std::vector<Var> inputs, BackwardRule rule, std::string_view op);

  // d output / d wrt[i] for a scalar output. With create_graph the returned
  // gradients are themselves recorded and differentiable; otherwise they are
  // constants. Does not consume the tape.
  std::vector<Var> grad(const Var& output, std::span<const Var> wrt, bool create_graph);

  // Accumulates d output / d leaf into every requires_grad leaf's gradient slot
  // and marks the tape consumed. A second call throws until rearm() or reset().
  void backward(const Var& output);

  const Tensor& value(const Var& v) const;
  const Tensor& leaf_tensor(const Var& v) const;
  bool needs_grad(const Var& v) const;

  void zero_grads();
  void rearm() noexcept { consumed_ = false; }
  void reset();
  bool consumed() const noexcept { return consumed_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool recording() const noexcept { return recording_; }

 private:
  struct Node {
    Tensor value;
    std::vector<Var> inputs;
    BackwardRule rule;
    bool needs_grad = false;
    bool leaf = false;
  };

  void check_owned(const Var& v) const;

  std::deque<Node> nodes_;
  bool recording_ = true;
  bool consumed_ = false;
};

}  // namespace glab
