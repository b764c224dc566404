#include <doctest.h>

#include <cmath>
#include <vector>

#include "ntil/errors.hpp"
#include "ntil/loss.hpp"
#include "ntil/oracle.hpp"

using namespace ntil;

namespace {

double emd_of(const std::vector<double>& p, std::size_t target) {
  ad::Tape tape;
  return emd_digit({tape.constant(Tensor::vector(p)), target}).item();
}

double rel(double x, double y) {
  ad::Tape tape;
  return relative_deviation(tape.constant(Tensor::scalar(x)), y, NtilParams{}).item();
}

double mag(double x, double y) {
  ad::Tape tape;
  return magnitude_deviation(tape.constant(Tensor::scalar(x)), y, NtilParams{}).item();
}

std::vector<double> one_hot(std::size_t k) {
  std::vector<double> p(10, 0.0);
  p[k] = 1.0;
  return p;
}

// Logits whose digit columns are log(p) and whose other columns are far below.
Tensor logits_for(const Vocabulary& v, const TokenIds& target,
                  const std::vector<std::vector<double>>& rows) {
  Tensor t = Tensor::filled({target.size(), v.size()}, -1e4);
  std::size_t next = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (!v.is_digit(target[i])) {
      t.at(i, target[i]) = 0.0;
      continue;
    }
    for (std::size_t d = 0; d < 10; ++d) {
      t.at(i, v.digit_token_ids()[d]) = std::log(std::max(rows[next][d], 1e-300));
    }
    ++next;
  }
  return t;
}

}  // namespace

TEST_CASE("emd_digit examples") {
  CHECK(emd_of(one_hot(3), 3) == 0.0);
  CHECK(emd_of(std::vector<double>(10, 0.1), 3) == doctest::Approx(2.7).epsilon(1e-12));
  std::vector<double> near(10, 0.0), far(10, 0.0);
  near[3] = near[2] = 0.5;
  far[3] = far[9] = 0.5;
  CHECK(emd_of(near, 3) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(emd_of(far, 3) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK_THROWS_AS(emd_of(one_hot(3), 10), ContractViolation);
}

TEST_CASE("emd_digit gradient is |i - k|") {
  ad::Tape tape;
  const ad::Var p = tape.leaf(Tensor::vector(std::vector<double>(10, 0.1)));
  tape.backward(emd_digit({p, 4}));
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(p.grad().values[i] == oracle::index_distance(i, 4));
  }
}

TEST_CASE("exponential position weights") {
  const auto w = exp_position_weights(3, 0.2);
  REQUIRE(w.size() == 3);
  CHECK(w[0] == doctest::Approx(1.44).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(1.2).epsilon(1e-12));
  CHECK(w[2] == 1.0);
  CHECK(exp_position_weights(4, 0.0) == std::vector<double>(4, 1.0));
  CHECK_THROWS_AS(exp_position_weights(0, 0.2), ContractViolation);
}

TEST_CASE("relative and magnitude deviation worked values") {
  CHECK(rel(1, 10) == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(rel(1, 100) == doctest::Approx(0.99).epsilon(1e-7));
  CHECK(mag(1, 10) == doctest::Approx(std::log(10.0)).epsilon(1e-7));
  CHECK(mag(1, 100) == doctest::Approx(std::log(100.0)).epsilon(1e-7));
  CHECK(rel(5, 5) == 0.0);
  CHECK(mag(5, 5) == 0.0);
  // Predictions 1.01 and 1.98 against 0.98.
  CHECK(rel(1.01, 0.98) == doctest::Approx(0.03 / 1.01).epsilon(1e-7));
  CHECK(rel(1.98, 0.98) == doctest::Approx(1.0 / 1.98).epsilon(1e-7));
  CHECK(rel(0, 0) == 0.0);
}

TEST_CASE("gumbel_softmax without noise sharpens and keeps the argmax") {
  ad::Tape tape;
  Rng rng(1);
  const Tensor& y =
      gumbel_softmax(tape.constant(Tensor::vector({0.0, 2.0, 1.0})), 0.1, 0.0, rng).value();
  CHECK(y.values[1] > 0.9999);
  CHECK(y.values[0] + y.values[1] + y.values[2] == doctest::Approx(1.0));
  CHECK_THROWS_AS(gumbel_softmax(tape.constant(Tensor::vector({1.0})), 0.0, 0.0, rng),
                  ContractViolation);
}

TEST_CASE("gumbel noise is seeded") {
  auto draw = [](std::uint64_t seed) {
    ad::Tape tape;
    Rng rng(seed);
    return gumbel_softmax(tape.constant(Tensor::vector({0.0, 0.1, 0.2})), 1.0, 1.0, rng).value();
  };
  CHECK(draw(5) == draw(5));
  CHECK_FALSE(draw(5) == draw(6));
}

TEST_CASE("construct_value") {
  const Vocabulary v = Vocabulary::standard();
  auto value_of = [&](const std::string& text) {
    const auto ids = v.encode(text);
    const auto span = find_digit_spans(v, ids).at(0);
    std::vector<double> rows;
    for (std::size_t pos : span.digit_positions()) {
      const auto hot = one_hot(static_cast<std::size_t>(v.digit_value(ids[pos])));
      rows.insert(rows.end(), hot.begin(), hot.end());
    }
    ad::Tape tape;
    return construct_value(tape.constant(Tensor({span.digit_count(), 10}, rows)), span).item();
  };
  CHECK(value_of("0.98") == 0.98);
  CHECK(value_of("123456789") == 123456789.0);
  CHECK(value_of("7") == 7.0);
  CHECK(value_of("10.5") == 10.5);
}

TEST_CASE("ntil_loss against an independent evaluation") {
  // Target "12" with rows {1: .6, 2: .3, 0: .1} and {2: .5, 3: .25, 4: .25}.
  // EMD: 1.2 * (0.1 + 0.3) + 1.0 * (0.25 + 0.5) = 1.23; the remaining terms
  // come from the sharpened value 12.0126799...; values computed offline.
  const Vocabulary v = Vocabulary::standard();
  const TokenIds target = v.encode("12");
  std::vector<double> r1(10, 0.0), r2(10, 0.0);
  r1[0] = 0.1;
  r1[1] = 0.6;
  r1[2] = 0.3;
  r2[2] = 0.5;
  r2[3] = 0.25;
  r2[4] = 0.25;
  ad::Tape tape;
  Rng rng(0);
  const LossResult r = ntil_loss(tape.constant(logits_for(v, target, {r1, r2})), target,
                                 find_digit_spans(v, target), v, NtilParams{}, rng);
  CHECK(r.breakdown.emd_weighted == doctest::Approx(1.23).epsilon(1e-9));
  CHECK(r.breakdown.ntil == doctest::Approx(1.2304223289816867).epsilon(1e-9));
  CHECK(r.breakdown.per_span.at(0).predicted_value ==
        doctest::Approx(12.012679908787605).epsilon(1e-9));
  const double ce = -(std::log(0.6) + std::log(0.5)) / 2.0;
  CHECK(r.breakdown.ce == doctest::Approx(ce).epsilon(1e-9));
  CHECK(std::abs(r.breakdown.total - (r.breakdown.ce + 0.3 * r.breakdown.ntil)) <= 1e-9);
}

TEST_CASE("cross entropy cannot tell near from far, emd can") {
  const Vocabulary v = Vocabulary::standard();
  const TokenIds target = v.encode("3");
  std::vector<double> near(10, 0.0), far(10, 0.0);
  near[3] = near[2] = 0.5;
  far[3] = far[9] = 0.5;
  auto run = [&](const std::vector<double>& p) {
    ad::Tape tape;
    Rng rng(0);
    return ntil_loss(tape.constant(logits_for(v, target, {p})), target, find_digit_spans(v, target),
                     v, NtilParams{}, rng)
        .breakdown;
  };
  const LossBreakdown a = run(near);
  const LossBreakdown b = run(far);
  CHECK(a.ce == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(b.ce == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(a.emd_weighted == doctest::Approx(0.5));
  CHECK(b.emd_weighted == doctest::Approx(3.0));
}

TEST_CASE("targets without digits contribute no ntil term") {
  const Vocabulary v = Vocabulary::standard();
  const TokenIds target = v.encode("ab");
  ad::Tape tape;
  Rng rng(0);
  const LossResult r =
      ntil_loss(tape.constant(logits_for(v, target, {})), target, {}, v, NtilParams{}, rng);
  CHECK(r.breakdown.ntil == 0.0);
  CHECK(r.breakdown.total == r.breakdown.ce);
}

TEST_CASE("ce_on_digits=false drops digit positions from CE only") {
  const Vocabulary v = Vocabulary::standard();
  const TokenIds target = v.encode("a5");
  std::vector<double> p(10, 0.1);
  ad::Tape tape;
  Rng rng(0);
  const LossResult r = ntil_loss(tape.constant(logits_for(v, target, {p})), target,
                                 find_digit_spans(v, target), v, NtilParams{}, rng, {false});
  CHECK(r.breakdown.ce == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(r.breakdown.emd_weighted > 0.0);
}

TEST_CASE("parameter validation") {
  NtilParams p;
  p.tau = 0.0;
  CHECK_THROWS_AS(p.validate(), ContractViolation);
  p = NtilParams{};
  p.alpha = -0.1;
  CHECK_THROWS_AS(p.validate(), ContractViolation);
}

TEST_CASE("gumbel_softmax reductions") {
  ad::Tape tape;
  Rng rng(1);
  const Tensor& u = gumbel_softmax(tape.constant(Tensor::filled({10}, 0.7)), 0.1, 0.0, rng).value();
  for (double p : u.values) {
    CHECK(p == doctest::Approx(0.1).epsilon(1e-12));
  }
  const std::vector<double> logits{0.3, -1.0, 2.0, 0.5};
  const Tensor& t1 = gumbel_softmax(tape.constant(Tensor::vector(logits)), 1.0, 0.0, rng).value();
  const Tensor& s = ad::softmax(tape.constant(Tensor::vector(logits)), 0).value();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    CHECK(t1.values[i] == doctest::Approx(s.values[i]).epsilon(1e-12));
  }
  const Tensor& sharp =
      gumbel_softmax(tape.constant(Tensor::vector({1.0, 3.0, 2.0})), 0.1, 0.0, rng).value();
  CHECK(sharp.values[1] >= 0.9999);
}

TEST_CASE("construct_value of a uniform row is the digit mean") {
  const Vocabulary v = Vocabulary::standard();
  const auto ids = v.encode("5");
  ad::Tape tape;
  const ad::Var rows = tape.constant(Tensor::filled({1, 10}, 0.1));
  CHECK(construct_value(rows, find_digit_spans(v, ids).at(0)).item() ==
        doctest::Approx(4.5).epsilon(1e-12));
  CHECK_THROWS_AS(
      construct_value(tape.constant(Tensor::filled({2, 10}, 0.1)), find_digit_spans(v, ids).at(0)),
      ContractViolation);
}

TEST_CASE("relative and magnitude deviation are scale invariant") {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const double x = 1.0 + 100.0 * rng.uniform();
    const double y = 1.0 + 100.0 * rng.uniform();
    const double c = 0.5 + 10.0 * rng.uniform();
    CHECK(std::abs(rel(c * x, c * y) - rel(x, y)) <= 1e-9);
    // d/d(eps) of log((x + eps) / (y + eps)) is about 1/x - 1/y.
    const double eps_effect =
        1e-8 * (std::abs(1 / x - 1 / y) + std::abs(1 / (c * x) - 1 / (c * y)));
    CHECK(std::abs(mag(c * x, c * y) - mag(x, y)) <= 1e-9 + eps_effect);
  }
}
