#include <doctest.h>

#include <cmath>

#include "ntil/autodiff.hpp"
#include "ntil/errors.hpp"
#include "ntil/oracle.hpp"
#include "ntil/rng.hpp"

using namespace ntil;

namespace {

// Tape gradient of fn at x versus central differences.
template <typename Fn>
void check_gradient(Fn fn, const Tensor& x, double tol = 1e-6) {
  ad::Tape tape;
  const ad::Var v = tape.leaf(x);
  const ad::Var out = fn(v);
  tape.backward(out);
  const Tensor analytic = v.grad();
  const auto numeric = oracle::finite_diff(
      [&](std::span<const double> p) {
        ad::Tape t;
        Tensor moved = x;
        moved.values.assign(p.begin(), p.end());
        return fn(t.constant(moved)).item();
      },
      x.values);
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    CHECK(oracle::gradient_error(analytic.values[i], numeric[i]) <= tol);
  }
}

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t = Tensor::zeros({r, c});
  for (double& v : t.values) {
    v = rng.uniform() * 2.0 - 1.0;
  }
  return t;
}

}  // namespace

TEST_CASE("elementwise ops match finite differences") {
  const Tensor x = random_matrix(3, 4, 1);
  check_gradient([](ad::Var a) { return ad::sum(ad::tanh(a) * ad::sigmoid(a)); }, x);
  check_gradient([](ad::Var a) { return ad::sum(ad::exp(a) / ad::add_scalar(ad::abs(a), 1.0)); },
                 x);
  check_gradient(
      [](ad::Var a) { return ad::mean(ad::log(ad::add_scalar(ad::scale(a, 0.5), 2.0))); }, x);
  check_gradient([](ad::Var a) { return ad::sum(-a - ad::scale(a, 3.0)); }, x);
}

TEST_CASE("matmul, softmax and row ops match finite differences") {
  const Tensor x = random_matrix(3, 4, 2);
  const Tensor w = random_matrix(4, 5, 3);
  check_gradient(
      [&](ad::Var a) {
        const ad::Var c = a.tape().constant(w);
        return ad::sum(ad::softmax(ad::matmul(a, c), 1) * ad::matmul(a, c));
      },
      x);
  check_gradient([](ad::Var a) { return ad::sum(ad::softmax(a, 0) * a); }, x);
  check_gradient([](ad::Var a) { return ad::sum(ad::log_softmax(a) * a); }, x);
  check_gradient(
      [](ad::Var a) {
        const std::size_t rows[] = {2, 0, 2};
        const std::size_t cols[] = {1, 3};
        const ad::Var picked = ad::select_cols(ad::gather_rows(a, rows), cols);
        return ad::sum(picked * picked) + ad::sum(ad::transpose(ad::slice_rows(a, 1, 2)));
      },
      x);
  check_gradient(
      [](ad::Var a) {
        const std::size_t idx[] = {0, 3, 1};
        return ad::sum(ad::pick(a, idx)) + ad::sum(ad::sum(a, 0)) * ad::sum(ad::sum(a, 1));
      },
      x);
  check_gradient(
      [&](ad::Var a) {
        const ad::Var row = ad::reshape(ad::slice_rows(a, 0, 1), {4});
        return ad::sum(ad::tanh(ad::add_row(a, row)));
      },
      x);
  check_gradient(
      [](ad::Var a) {
        return ad::sum(ad::concat_rows(std::vector<ad::Var>{a, ad::scale(a, 2.0)}) *
                       ad::concat_rows(std::vector<ad::Var>{a, a}));
      },
      x);
}

TEST_CASE("abs has subgradient 0 at 0 and max/min route ties to the first operand") {
  ad::Tape tape;
  const ad::Var a = tape.leaf(Tensor::vector({0.0, -2.0, 3.0}));
  const ad::Var b = tape.leaf(Tensor::vector({0.0, 5.0, 3.0}));
  tape.backward(ad::sum(ad::abs(a) + ad::max_elem(a, b) + ad::min_elem(a, b)));
  // abs: 0, -1, 1; max: a wins ties only; min: a wins ties and where smaller.
  CHECK(a.grad().values == std::vector<double>{2.0, 0.0, 3.0});
  CHECK(b.grad().values == std::vector<double>{0.0, 1.0, 0.0});
}

TEST_CASE("single-element operands broadcast") {
  ad::Tape tape;
  const ad::Var a = tape.leaf(Tensor::vector({1.0, 2.0, 3.0}));
  const ad::Var s = tape.leaf(Tensor::scalar(2.0));
  tape.backward(ad::sum(a * s));
  CHECK(s.grad().item() == doctest::Approx(6.0));
  CHECK(a.grad().values == std::vector<double>{2.0, 2.0, 2.0});
}

TEST_CASE("contract violations") {
  ad::Tape tape;
  const ad::Var a = tape.leaf(Tensor::vector({1.0, 2.0}));
  const ad::Var m = tape.leaf(Tensor::zeros({2, 3}));
  CHECK_THROWS_AS(ad::add(a, tape.leaf(Tensor::vector({1.0, 2.0, 3.0}))), ContractViolation);
  CHECK_THROWS_AS(ad::matmul(m, m), ContractViolation);
  CHECK_THROWS_AS(ad::log(ad::add_scalar(a, -1.0)), DomainError);
  CHECK_THROWS_AS(tape.backward(a), ContractViolation);
  const ad::Var loss = ad::sum(a);
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), ContractViolation);
}

TEST_CASE("constants receive no gradient") {
  ad::Tape tape;
  const ad::Var c = tape.constant(Tensor::vector({1.0, 2.0}));
  const ad::Var a = tape.leaf(Tensor::vector({3.0, 4.0}));
  tape.backward(ad::sum(a * c));
  CHECK_FALSE(c.requires_grad());
  CHECK_THROWS(c.grad());
  CHECK(a.grad().values == std::vector<double>{1.0, 2.0});
}
