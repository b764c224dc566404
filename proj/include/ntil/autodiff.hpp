#pragma once

// Define-by-run reverse-mode differentiation over dense tensors.
//
// A Tape records every operation applied to its Vars in execution order, so
// the recording is already topologically sorted. backward() walks it once in
// reverse. Broadcasting is limited to a single-element operand combined with
// a tensor, plus the explicit row-broadcast add_row().

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "ntil/tensor.hpp"

namespace ntil::ad {

class Tape;

/// Handle to a tensor recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape; }
  std::size_t size() const { return value().size(); }
  double item() const { return value().item(); }
  bool requires_grad() const;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input.
  Var leaf(Tensor value);
  /// Input that never receives a gradient.
  Var constant(Tensor value);

  /// Records the result of an operation. `backward` reads grad(self) and
  /// accumulates into the grads of `inputs`; it is dropped when no input
  /// requires a gradient.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  /// Populates grad() of every Var reachable from `loss`. A tape supports a
  /// single backward pass.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const;
  /// Grad buffer for accumulation inside backward rules.
  Tensor& grad_buffer(std::size_t id);
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;  // stable addresses: value() references survive record()
  bool backward_done_ = false;
};

// Elementwise arithmetic. Either operand may be single-element.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);

/// abs with subgradient 0 at exactly 0.
Var abs(Var a);
/// Natural log; throws DomainError on any non-positive entry.
Var log(Var a);
Var exp(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
/// Elementwise max/min; ties route the gradient to `a`.
Var max_elem(Var a, Var b);
Var min_elem(Var a, Var b);

/// (n x k) * (k x m).
Var matmul(Var a, Var b);
Var transpose(Var a);
/// Sum of all entries, as a single-element tensor.
Var sum(Var a);
/// Rank-2 reduction: axis 0 collapses rows (result 1 x cols), axis 1
/// collapses columns (result rows x 1).
Var sum(Var a, int axis);
/// Mean of all entries.
Var mean(Var a);
Var reshape(Var a, Shape shape);

/// Softmax over `axis` of a rank-2 tensor, or over a rank-1 tensor (axis 0).
Var softmax(Var a, int axis);
/// Row-wise log-softmax of a rank-2 tensor (rank-1 treated as one row).
Var log_softmax(Var a);

/// (n x m) + broadcast (m) row vector.
Var add_row(Var a, Var row);
/// Rows `indices` of a rank-2 tensor, in order; repeats allowed.
Var gather_rows(Var table, std::span<const std::size_t> indices);
/// Rows [begin, begin + count).
Var slice_rows(Var a, std::size_t begin, std::size_t count);
/// Columns `indices` of a rank-2 tensor.
Var select_cols(Var a, std::span<const std::size_t> indices);
/// Entry a[r, indices[r]] for every row r, as a rank-1 tensor.
Var pick(Var a, std::span<const std::size_t> indices);
/// Vertical stack of rank-2 tensors with equal column counts.
Var concat_rows(std::span<const Var> parts);

}  // namespace ntil::ad
