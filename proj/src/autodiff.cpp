#include "ntil/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "ntil/errors.hpp"

namespace ntil::ad {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.values.data(), static_cast<Eigen::Index>(t.shape[0]),
                  static_cast<Eigen::Index>(t.shape[1]));
}

MutMap as_matrix(Tensor& t) {
  return MutMap(t.values.data(), static_cast<Eigen::Index>(t.shape[0]),
                static_cast<Eigen::Index>(t.shape[1]));
}

Tape& same_tape(Var a, Var b) {
  require(a.valid() && b.valid(), "operation on an unbound Var");
  require(&a.tape() == &b.tape(), "operands recorded on different tapes");
  return a.tape();
}

void require_rank2(const Tensor& t, const char* op) {
  require(t.rank() == 2,
          [&] { return std::string(op) + " needs a rank-2 tensor, got " + shape_string(t.shape); });
}

// Elementwise binary op with single-element broadcast. `fwd(x, y)` gives the
// value, `dx(x, y, out)` / `dy(x, y, out)` the local partials.
template <class Fwd, class Dx, class Dy>
Var binary(Var a, Var b, const char* name, Fwd fwd, Dx dx, Dy dy) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool a_bcast = av.size() == 1 && bv.size() != 1;
  const bool b_bcast = bv.size() == 1 && av.size() != 1;
  if (!a_bcast && !b_bcast) {
    require(av.shape == bv.shape, [&] {
      return std::string(name) + ": shape mismatch " + shape_string(av.shape) + " vs " +
             shape_string(bv.shape);
    });
  }
  const Shape out_shape = a_bcast ? bv.shape : av.shape;
  const std::size_t n = shape_size(out_shape);
  Tensor out = Tensor::zeros(out_shape);
  for (std::size_t i = 0; i < n; ++i) {
    out.values[i] = fwd(av.values[a_bcast ? 0 : i], bv.values[b_bcast ? 0 : i]);
  }
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return tape.record(std::move(out), {ia, ib}, [=](Tape& t, std::size_t self) {
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(ib);
    const Tensor& o = t.value(self);
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < n; ++i) {
        ga.values[a_bcast ? 0 : i] +=
            g.values[i] * dx(x.values[a_bcast ? 0 : i], y.values[b_bcast ? 0 : i], o.values[i]);
      }
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < n; ++i) {
        gb.values[b_bcast ? 0 : i] +=
            g.values[i] * dy(x.values[a_bcast ? 0 : i], y.values[b_bcast ? 0 : i], o.values[i]);
      }
    }
  });
}

// Elementwise unary op; `dx(x, out)` is the local derivative.
template <class Fwd, class Dx>
Var unary(Var a, Fwd fwd, Dx dx) {
  require(a.valid(), "operation on an unbound Var");
  Tape& tape = a.tape();
  const Tensor& av = a.value();
  Tensor out = Tensor::zeros(av.shape);
  for (std::size_t i = 0; i < av.size(); ++i) {
    out.values[i] = fwd(av.values[i]);
  }
  const std::size_t ia = a.id();
  return tape.record(std::move(out), {ia}, [=](Tape& t, std::size_t self) {
    const Tensor& x = t.value(ia);
    const Tensor& o = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < x.size(); ++i) {
      ga.values[i] += g.values[i] * dx(x.values[i], o.values[i]);
    }
  });
}

}  // namespace

// ---------------------------------------------------------------- Var / Tape

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  require(!backward_done_, "cannot record on a tape after backward()");
  bool needs = false;
  for (std::size_t in : inputs) {
    require(in < nodes_.size(), "operation input not on this tape");
    needs = needs || nodes_[in].requires_grad;
  }
  Node node{std::move(value), {}, std::move(inputs), {}, needs};
  if (needs) {
    node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::grad(std::size_t id) const {
  const Node& node = nodes_[id];
  require(node.grad.size() == node.value.size(),
          "gradient not available: run backward() on a loss that depends on this tensor");
  return node.grad;
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& node = nodes_[id];
  if (node.grad.size() != node.value.size()) {
    node.grad = Tensor::zeros(node.value.shape);
  }
  return node.grad;
}

void Tape::backward(Var loss) {
  require(loss.valid() && &loss.tape() == this, "backward() on a Var from another tape");
  require(!backward_done_, "backward() already ran on this tape; gradients are not reset");
  require(loss.size() == 1, [&] {
    return "backward() needs a scalar loss, got shape " + shape_string(loss.shape());
  });
  backward_done_ = true;
  for (Node& node : nodes_) {
    if (node.requires_grad) {
      node.grad = Tensor::zeros(node.value.shape);
    }
  }
  if (!nodes_[loss.id()].requires_grad) {
    return;
  }
  nodes_[loss.id()].grad.values[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    if (nodes_[i].backward) {
      nodes_[i].backward(*this, i);
    }
  }
}

// ---------------------------------------------------------------- arithmetic

Var add(Var a, Var b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Var div(Var a, Var b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double x, double y, double) { return -x / (y * y); });
}

Var neg(Var a) {
  return unary(
      a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var scale(Var a, double factor) {
  return unary(
      a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double offset) {
  return unary(
      a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Var operator+(Var a, Var b) { return add(a, b); }
Var operator-(Var a, Var b) { return sub(a, b); }
Var operator*(Var a, Var b) { return mul(a, b); }
Var operator/(Var a, Var b) { return div(a, b); }
Var operator-(Var a) { return neg(a); }

Var abs(Var a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var log(Var a) {
  for (double x : a.value().values) {
    if (!(x > 0.0)) {
      throw DomainError("log of non-positive value " + std::to_string(x));
    }
  }
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var exp(Var a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double o) { return o; });
}

Var tanh(Var a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double o) { return 1.0 - o * o; });
}

Var sigmoid(Var a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) {
          return 1.0 / (1.0 + std::exp(-x));
        }
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double o) { return o * (1.0 - o); });
}

Var max_elem(Var a, Var b) {
  return binary(
      a, b, "max_elem", [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y, double) { return x >= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x >= y ? 0.0 : 1.0; });
}

Var min_elem(Var a, Var b) {
  return binary(
      a, b, "min_elem", [](double x, double y) { return x <= y ? x : y; },
      [](double x, double y, double) { return x <= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x <= y ? 0.0 : 1.0; });
}

// ---------------------------------------------------------------- linear algebra

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2(av, "matmul");
  require_rank2(bv, "matmul");
  require(av.shape[1] == bv.shape[0], [&] {
    return "matmul: inner dimensions differ " + shape_string(av.shape) + " * " +
           shape_string(bv.shape);
  });
  Tensor out = Tensor::zeros({av.shape[0], bv.shape[1]});
  as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv);
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return tape.record(std::move(out), {ia, ib}, [=](Tape& t, std::size_t self) {
    const auto g = as_matrix(t.grad(self));
    if (t.requires_grad(ia)) {
      as_matrix(t.grad_buffer(ia)).noalias() += g * as_matrix(t.value(ib)).transpose();
    }
    if (t.requires_grad(ib)) {
      as_matrix(t.grad_buffer(ib)).noalias() += as_matrix(t.value(ia)).transpose() * g;
    }
  });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  require_rank2(av, "transpose");
  Tensor out = Tensor::zeros({av.shape[1], av.shape[0]});
  as_matrix(out) = as_matrix(av).transpose();
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [=](Tape& t, std::size_t self) {
    as_matrix(t.grad_buffer(ia)) += as_matrix(t.grad(self)).transpose();
  });
}

Var sum(Var a) {
  const Tensor& av = a.value();
  double total = 0.0;
  for (double x : av.values) {
    total += x;
  }
  const std::size_t ia = a.id();
  return a.tape().record(Tensor::scalar(total), {ia}, [=](Tape& t, std::size_t self) {
    const double g = t.grad(self).values[0];
    for (double& v : t.grad_buffer(ia).values) {
      v += g;
    }
  });
}

Var sum(Var a, int axis) {
  const Tensor& av = a.value();
  require_rank2(av, "sum(axis)");
  require(axis == 0 || axis == 1, "sum: axis must be 0 or 1");
  const std::size_t rows = av.shape[0];
  const std::size_t cols = av.shape[1];
  Tensor out = axis == 0 ? Tensor::zeros({1, cols}) : Tensor::zeros({rows, 1});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      out.values[axis == 0 ? c : r] += av.values[r * cols + c];
    }
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        ga.values[r * cols + c] += g.values[axis == 0 ? c : r];
      }
    }
  });
}

Var mean(Var a) {
  const std::size_t n = a.size();
  require(n > 0, "mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var reshape(Var a, Shape shape) {
  require(shape_size(shape) == a.size(), [&] {
    return "reshape: " + shape_string(a.shape()) + " -> " + shape_string(shape) +
           " changes element count";
  });
  Tensor out(std::move(shape), a.value().values);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga.values[i] += g.values[i];
    }
  });
}

// ---------------------------------------------------------------- normalization

namespace {

// Views a rank-1 or rank-2 tensor as (outer groups) x (group length) with a
// stride, so softmax can run along either axis of a matrix.
struct Groups {
  std::size_t count;
  std::size_t length;
  std::size_t outer_stride;
  std::size_t inner_stride;
};

Groups softmax_groups(const Tensor& t, int axis) {
  if (t.rank() == 1) {
    require(axis == 0, "softmax: a rank-1 tensor only has axis 0");
    return {1, t.shape[0], 0, 1};
  }
  require_rank2(t, "softmax");
  require(axis == 0 || axis == 1, "softmax: axis must be 0 or 1");
  const std::size_t rows = t.shape[0];
  const std::size_t cols = t.shape[1];
  if (axis == 1) {
    return {rows, cols, cols, 1};
  }
  return {cols, rows, 1, cols};
}

}  // namespace

Var softmax(Var a, int axis) {
  const Tensor& av = a.value();
  const Groups gr = softmax_groups(av, axis);
  Tensor out = Tensor::zeros(av.shape);
  for (std::size_t g = 0; g < gr.count; ++g) {
    const std::size_t base = g * gr.outer_stride;
    double peak = -INFINITY;
    for (std::size_t j = 0; j < gr.length; ++j) {
      peak = std::max(peak, av.values[base + j * gr.inner_stride]);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < gr.length; ++j) {
      const std::size_t k = base + j * gr.inner_stride;
      out.values[k] = std::exp(av.values[k] - peak);
      total += out.values[k];
    }
    for (std::size_t j = 0; j < gr.length; ++j) {
      out.values[base + j * gr.inner_stride] /= total;
    }
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [=](Tape& t, std::size_t self) {
    const Tensor& s = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t grp = 0; grp < gr.count; ++grp) {
      const std::size_t base = grp * gr.outer_stride;
      double dot = 0.0;
      for (std::size_t j = 0; j < gr.length; ++j) {
        const std::size_t k = base + j * gr.inner_stride;
        dot += g.values[k] * s.values[k];
      }
      for (std::size_t j = 0; j < gr.length; ++j) {
        const std::size_t k = base + j * gr.inner_stride;
        ga.values[k] += s.values[k] * (g.values[k] - dot);
      }
    }
  });
}

Var log_softmax(Var a) {
  const Tensor& av = a.value();
  const std::size_t rows = av.rank() == 1 ? 1 : av.shape[0];
  const std::size_t cols = av.rank() == 1 ? av.shape[0] : av.shape[1];
  require(av.rank() == 1 || av.rank() == 2, "log_softmax needs rank 1 or 2");
  Tensor out = Tensor::zeros(av.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = av.values.data() + r * cols;
    const double peak = *std::max_element(row, row + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      total += std::exp(row[c] - peak);
    }
    const double lse = peak + std::log(total);
    for (std::size_t c = 0; c < cols; ++c) {
      out.values[r * cols + c] = row[c] - lse;
    }
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [=](Tape& t, std::size_t self) {
    const Tensor& ls = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      double gsum = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        gsum += g.values[r * cols + c];
      }
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t k = r * cols + c;
        ga.values[k] += g.values[k] - std::exp(ls.values[k]) * gsum;
      }
    }
  });
}

// ---------------------------------------------------------------- indexing

Var add_row(Var a, Var row) {
  Tape& tape = same_tape(a, row);
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  require_rank2(av, "add_row");
  const std::size_t rows = av.shape[0];
  const std::size_t cols = av.shape[1];
  require(rv.size() == cols, [&] {
    return "add_row: row of " + std::to_string(rv.size()) + " entries for " + std::to_string(cols) +
           " columns";
  });
  Tensor out = av;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      out.values[r * cols + c] += rv.values[c];
    }
  }
  const std::size_t ia = a.id();
  const std::size_t ib = row.id();
  return tape.record(std::move(out), {ia, ib}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga.values[i] += g.values[i];
      }
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad_buffer(ib);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          gb.values[c] += g.values[r * cols + c];
        }
      }
    }
  });
}

Var gather_rows(Var table, std::span<const std::size_t> indices) {
  const Tensor& tv = table.value();
  require_rank2(tv, "gather_rows");
  const std::size_t cols = tv.shape[1];
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  Tensor out = Tensor::zeros({idx.size(), cols});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    require(idx[r] < tv.shape[0], [&] {
      return "gather_rows: row " + std::to_string(idx[r]) + " out of range for " +
             shape_string(tv.shape);
    });
    std::copy_n(tv.values.begin() + static_cast<std::ptrdiff_t>(idx[r] * cols), cols,
                out.values.begin() + static_cast<std::ptrdiff_t>(r * cols));
  }
  const std::size_t ia = table.id();
  return table.tape().record(std::move(out), {ia},
                             [=, idx = std::move(idx)](Tape& t, std::size_t self) {
                               const Tensor& g = t.grad(self);
                               Tensor& ga = t.grad_buffer(ia);
                               for (std::size_t r = 0; r < idx.size(); ++r) {
                                 for (std::size_t c = 0; c < cols; ++c) {
                                   ga.values[idx[r] * cols + c] += g.values[r * cols + c];
                                 }
                               }
                             });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& av = a.value();
  require_rank2(av, "slice_rows");
  require(begin + count <= av.shape[0],
          [&] { return "slice_rows: range past end of " + shape_string(av.shape); });
  const std::size_t cols = av.shape[1];
  const auto first = av.values.begin() + static_cast<std::ptrdiff_t>(begin * cols);
  Tensor out({count, cols},
             std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count * cols)));
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga.values[begin * cols + i] += g.values[i];
    }
  });
}

Var select_cols(Var a, std::span<const std::size_t> indices) {
  const Tensor& av = a.value();
  require_rank2(av, "select_cols");
  const std::size_t rows = av.shape[0];
  const std::size_t cols = av.shape[1];
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  for (std::size_t c : idx) {
    require(c < cols, [&] { return "select_cols: column " + std::to_string(c) + " out of range"; });
  }
  const std::size_t m = idx.size();
  Tensor out = Tensor::zeros({rows, m});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < m; ++j) {
      out.values[r * m + j] = av.values[r * cols + idx[j]];
    }
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia},
                         [=, idx = std::move(idx)](Tape& t, std::size_t self) {
                           const Tensor& g = t.grad(self);
                           Tensor& ga = t.grad_buffer(ia);
                           for (std::size_t r = 0; r < rows; ++r) {
                             for (std::size_t j = 0; j < m; ++j) {
                               ga.values[r * cols + idx[j]] += g.values[r * m + j];
                             }
                           }
                         });
}

Var pick(Var a, std::span<const std::size_t> indices) {
  const Tensor& av = a.value();
  require_rank2(av, "pick");
  const std::size_t rows = av.shape[0];
  const std::size_t cols = av.shape[1];
  require(indices.size() == rows, [&] {
    return "pick: " + std::to_string(indices.size()) + " indices for " + std::to_string(rows) +
           " rows";
  });
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  Tensor out = Tensor::zeros({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    require(idx[r] < cols,
            [&] { return "pick: column " + std::to_string(idx[r]) + " out of range"; });
    out.values[r] = av.values[r * cols + idx[r]];
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {ia},
                         [=, idx = std::move(idx)](Tape& t, std::size_t self) {
                           const Tensor& g = t.grad(self);
                           Tensor& ga = t.grad_buffer(ia);
                           for (std::size_t r = 0; r < rows; ++r) {
                             ga.values[r * cols + idx[r]] += g.values[r];
                           }
                         });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows of nothing");
  Tape& tape = parts.front().tape();
  const std::size_t cols = parts.front().value().shape.at(1);
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  std::size_t rows = 0;
  for (const Var& p : parts) {
    same_tape(parts.front(), p);
    require_rank2(p.value(), "concat_rows");
    require(p.value().shape[1] == cols, "concat_rows: column counts differ");
    ids.push_back(p.id());
    offsets.push_back(rows * cols);
    rows += p.value().shape[0];
  }
  Tensor out = Tensor::zeros({rows, cols});
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& v = parts[i].value().values;
    std::copy(v.begin(), v.end(), out.values.begin() + static_cast<std::ptrdiff_t>(offsets[i]));
  }
  return tape.record(std::move(out), ids, [ids, offsets](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!t.requires_grad(ids[i])) {
        continue;
      }
      Tensor& gp = t.grad_buffer(ids[i]);
      for (std::size_t k = 0; k < gp.size(); ++k) {
        gp.values[k] += g.values[offsets[i] + k];
      }
    }
  });
}

}  // namespace ntil::ad
