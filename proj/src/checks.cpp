#include "ntil/checks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "ntil/autodiff.hpp"
#include "ntil/data.hpp"
#include "ntil/errors.hpp"
#include "ntil/loss.hpp"
#include "ntil/oracle.hpp"
#include "ntil/rng.hpp"
#include "ntil/train.hpp"
#include "ntil/vocab.hpp"

namespace ntil::checks {

namespace {

constexpr std::size_t kMaxRecordedFailures = 10;

// Flat probability vector with every entry >= floor.
std::vector<double> random_distribution(Rng& rng, std::size_t n, double floor = 0.0) {
  std::vector<double> p(n);
  double total = 0.0;
  for (double& x : p) {
    x = -std::log(rng.uniform_open());
    total += x;
  }
  for (double& x : p) {
    x = floor + (1.0 - floor * static_cast<double>(n)) * x / total;
  }
  return p;
}

double normal(Rng& rng) {
  // Box-Muller; only one of the pair is used.
  const double u1 = rng.uniform_open();
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

using Builder = std::function<ad::Var(ad::Tape&, ad::Var)>;

// Worst gradient_error between tape gradients and central differences.
double worst_gradient_error(const Builder& build, const Tensor& point) {
  ad::Tape tape;
  const ad::Var x = tape.leaf(point);
  tape.backward(build(tape, x));
  const std::vector<double> analytic = x.grad().values;
  const auto value_at = [&](std::span<const double> v) {
    ad::Tape t;
    return build(t, t.leaf(Tensor(point.shape, {v.begin(), v.end()}))).item();
  };
  const std::vector<double> numeric = oracle::finite_diff(value_at, point.values, 1e-5);
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, oracle::gradient_error(analytic[i], numeric[i]));
  }
  return worst;
}

DigitSpan random_span(Rng& rng) {
  DigitSpan span;
  span.integer_len = 1 + rng.below(3);
  span.frac_len = rng.below(3);
  if (span.frac_len > 0) {
    span.decimal_pos = span.integer_len;
  }
  span.end = span.digit_count() + (span.frac_len > 0 ? 1 : 0);
  return span;
}

}  // namespace

void CheckReport::fail(std::string message) {
  passed = false;
  if (failures.size() < kMaxRecordedFailures) {
    failures.push_back(std::move(message));
  }
}

std::string CheckReport::summary() const {
  std::ostringstream out;
  out << (passed ? "PASS " : "FAIL ") << name << ": " << cases << " cases, worst "
      << std::scientific << worst << " (tolerance " << tolerance << ")";
  return out.str();
}

// ---------------------------------------------------------------- emd

CheckReport emd_vs_oracle(std::uint64_t seed, std::size_t cases) {
  CheckReport report;
  report.name = "emd_digit vs 1-D transport oracle";
  report.tolerance = 1e-9;
  Rng rng(seed);
  for (std::size_t c = 0; c < cases; ++c) {
    // Mix dense and sparse distributions.
    std::vector<double> p = random_distribution(rng, 10);
    if (c % 3 == 1) {
      const std::size_t keep = 1 + rng.below(3);
      std::vector<double> sparse(10, 0.0);
      for (std::size_t i = 0; i < keep; ++i) {
        sparse[rng.below(10)] += 1.0 / static_cast<double>(keep);
      }
      p = sparse;
    }
    const std::size_t k = rng.below(10);
    std::vector<double> q(10, 0.0);
    q[k] = 1.0;

    ad::Tape tape;
    const double emd = emd_digit({tape.leaf(Tensor::vector(p)), k}).item();
    const double exact = oracle::transport_emd(p, q);
    const double delta = std::abs(emd - exact);
    report.worst = std::max(report.worst, delta);
    ++report.cases;
    if (delta > report.tolerance) {
      report.fail("case " + std::to_string(c) + ": emd_digit " + std::to_string(emd) +
                  " vs oracle " + std::to_string(exact));
    }
  }
  return report;
}

CheckReport oracle_vs_enumeration() {
  CheckReport report;
  report.name = "1-D transport formula vs plan enumeration";
  report.tolerance = 1e-9;
  // All compositions of `total` into `bins` non-negative parts.
  std::function<void(std::size_t, int, std::vector<int>&, std::vector<std::vector<int>>&)> compose =
      [&](std::size_t bins, int left, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
        if (cur.size() + 1 == bins) {
          cur.push_back(left);
          out.push_back(cur);
          cur.pop_back();
          return;
        }
        for (int a = 0; a <= left; ++a) {
          cur.push_back(a);
          compose(bins, left - a, cur, out);
          cur.pop_back();
        }
      };
  for (int denom = 1; denom <= 8; ++denom) {
    for (std::size_t n = 1; n <= 4; ++n) {
      for (std::size_t m = 1; m <= 4; ++m) {
        std::vector<std::vector<int>> ps;
        std::vector<std::vector<int>> qs;
        std::vector<int> cur;
        compose(n, denom, cur, ps);
        compose(m, denom, cur, qs);
        for (const auto& pu : ps) {
          for (const auto& qu : qs) {
            std::vector<double> p;
            std::vector<double> q;
            for (int a : pu) {
              p.push_back(static_cast<double>(a) / denom);
            }
            for (int b : qu) {
              q.push_back(static_cast<double>(b) / denom);
            }
            const double formula = oracle::transport_emd(p, q);
            const double enumerated = oracle::enumerate_plans(pu, qu).cost;
            const double delta = std::abs(formula - enumerated);
            report.worst = std::max(report.worst, delta);
            ++report.cases;
            if (delta > report.tolerance) {
              report.fail("D=" + std::to_string(denom) + " n=" + std::to_string(n) +
                          " m=" + std::to_string(m) + ": formula " + std::to_string(formula) +
                          " vs enumeration " + std::to_string(enumerated));
            }
          }
        }
      }
    }
  }
  return report;
}

CheckReport sinkhorn_vs_oracle(std::uint64_t seed, std::size_t cases) {
  CheckReport report;
  report.name = "log-domain Sinkhorn (reg 1e-3, 10000 iters) vs exact";
  report.tolerance = 1e-2;
  Rng rng(seed);
  std::size_t unconverged = 0;
  for (std::size_t c = 0; c < cases; ++c) {
    const std::vector<double> p = random_distribution(rng, 10);
    const std::vector<double> q = random_distribution(rng, 10);
    const auto approx = oracle::sinkhorn_emd(p, q, oracle::index_distance, 1e-3, 10000);
    const double delta = std::abs(approx.cost - oracle::transport_emd(p, q));
    unconverged += approx.converged ? 0 : 1;
    report.worst = std::max(report.worst, delta);
    ++report.cases;
    if (delta > report.tolerance) {
      report.fail("case " + std::to_string(c) + ": |sinkhorn - exact| = " + std::to_string(delta));
    }
  }
  report.notes.push_back(std::to_string(unconverged) + " runs stopped at the iteration cap");
  return report;
}

// ---------------------------------------------------------------- gradients

CheckReport gradients(std::uint64_t seed, std::size_t points) {
  CheckReport report;
  report.name = "tape gradients vs central differences";
  report.tolerance = 1e-4;
  Rng rng(seed);
  const NtilParams defaults;
  const Vocabulary vocab = Vocabulary::standard();

  auto record = [&](const std::string& fn, std::size_t point, double err) {
    report.worst = std::max(report.worst, err);
    ++report.cases;
    if (err > report.tolerance) {
      report.fail(fn + " point " + std::to_string(point) + ": relative error " +
                  std::to_string(err));
    }
  };
  // Log-uniform positive value in [0.1, 1000].
  auto magnitude = [&]() { return std::pow(10.0, -1.0 + 4.0 * rng.uniform()); };

  for (std::size_t i = 0; i < points; ++i) {
    const std::size_t k = rng.below(10);
    const Tensor x = Tensor::vector(random_distribution(rng, 10, 1e-3));
    record("emd_digit", i,
           worst_gradient_error(
               [k](ad::Tape&, ad::Var v) {
                 return emd_digit({v, k});
               },
               x));
  }

  for (const bool use_magnitude : {false, true}) {
    const std::string fn = use_magnitude ? "magnitude_deviation" : "relative_deviation";
    for (std::size_t i = 0; i < points; ++i) {
      double x = 0.0;
      double y = 0.0;
      do {
        x = magnitude();
        y = magnitude();
      } while (std::abs(x - y) < 1e-3 * std::max(x, y));
      const Builder build = [&, y](ad::Tape&, ad::Var v) {
        return use_magnitude ? magnitude_deviation(v, y, defaults)
                             : relative_deviation(v, y, defaults);
      };
      record(fn, i, worst_gradient_error(build, Tensor::vector({x})));
    }
  }

  for (std::size_t i = 0; i < points; ++i) {
    const DigitSpan span = random_span(rng);
    const double noise = i % 2 == 0 ? 0.0 : 1.0;
    const std::uint64_t noise_seed = rng.next();
    Tensor logits = Tensor::zeros({span.digit_count(), 10});
    for (double& v : logits.values) {
      v = normal(rng);
    }
    const Builder build = [&, noise, noise_seed](ad::Tape&, ad::Var v) {
      Rng noise_rng(noise_seed);
      return construct_value(gumbel_softmax(v, defaults.tau, noise, noise_rng), span);
    };
    record("construct_value(gumbel_softmax)", i, worst_gradient_error(build, logits));
  }

  const std::vector<Example> pool = gen_arithmetic(64, seed, {3, "+-", true});
  for (std::size_t i = 0; i < points;) {
    const EncodedExample ex = encode_example(vocab, pool[rng.below(pool.size())]);
    const std::size_t t = ex.target.size();
    Tensor logits = Tensor::zeros({t, vocab.size()});
    for (double& v : logits.values) {
      v = 2.0 * normal(rng);
    }
    const Builder build = [&](ad::Tape&, ad::Var v) {
      Rng unused(0);
      return ntil_loss(v, ex.target, ex.spans, vocab, defaults, unused).total;
    };
    // Keep clear of the |X - Y| and max/min kinks.
    ad::Tape probe;
    Rng unused(0);
    const LossResult lr =
        ntil_loss(probe.leaf(logits), ex.target, ex.spans, vocab, defaults, unused);
    bool near_kink = false;
    for (const SpanLoss& s : lr.breakdown.per_span) {
      near_kink = near_kink || std::abs(s.predicted_value - s.target_value) <
                                   1e-3 * std::max(1.0, s.target_value);
    }
    if (near_kink) {
      continue;
    }
    record("ntil_loss", i, worst_gradient_error(build, logits));
    ++i;
  }
  return report;
}

CheckReport emd_gradient_law(std::uint64_t seed, std::size_t cases) {
  CheckReport report;
  report.name = "|d emd_digit / d x_i| == |i - k|";
  report.tolerance = 0.0;
  Rng rng(seed);
  for (std::size_t c = 0; c < cases; ++c) {
    const std::size_t k = rng.below(10);
    ad::Tape tape;
    const ad::Var x = tape.leaf(Tensor::vector(random_distribution(rng, 10, 1e-6)));
    tape.backward(emd_digit({x, k}));
    for (std::size_t i = 0; i < 10; ++i) {
      if (i == k) {
        continue;
      }
      const double expected = oracle::index_distance(i, k);
      const double delta = std::abs(std::abs(x.grad().values[i]) - expected);
      report.worst = std::max(report.worst, delta);
      if (delta != 0.0) {
        report.fail("case " + std::to_string(c) + " i=" + std::to_string(i) +
                    " k=" + std::to_string(k));
      }
    }
    ++report.cases;
  }
  return report;
}

// ---------------------------------------------------------------- gumbel

CheckReport gumbel_argmax(std::uint64_t seed, std::size_t cases) {
  CheckReport report;
  report.name = "gumbel_softmax argmax preservation (tau 0.1, no noise)";
  report.tolerance = 0.0;
  Rng rng(seed);
  double lowest_peak = 1.0;
  std::size_t preserved = 0;
  for (std::size_t c = 0; c < cases; ++c) {
    std::vector<double> logits(10);
    std::vector<double> sorted;
    do {
      for (double& v : logits) {
        v = normal(rng);
      }
      sorted = logits;
      std::sort(sorted.rbegin(), sorted.rend());
    } while (sorted[0] - sorted[1] < 0.5);
    const auto top =
        static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());

    ad::Tape tape;
    Rng unused(0);
    const Tensor& y =
        gumbel_softmax(tape.constant(Tensor::vector(logits)), 0.1, 0.0, unused).value();
    const auto picked = static_cast<std::size_t>(
        std::max_element(y.values.begin(), y.values.end()) - y.values.begin());
    const double peak = y.values[picked];
    lowest_peak = std::min(lowest_peak, peak);
    ++report.cases;
    if (picked == top && peak >= 0.99) {
      ++preserved;
    } else {
      report.fail("case " + std::to_string(c) + ": argmax " + std::to_string(picked) + " vs " +
                  std::to_string(top) + ", max entry " + std::to_string(peak));
    }
  }
  report.worst = static_cast<double>(report.cases - preserved);
  report.notes.push_back("preserved " + std::to_string(preserved) + "/" +
                         std::to_string(report.cases) + ", lowest max entry " +
                         std::to_string(lowest_peak));
  return report;
}

CheckReport construct_exactness(std::uint64_t seed, std::size_t cases) {
  CheckReport report;
  report.name = "construct_value exactness on one-hot rows";
  report.tolerance = 0.0;
  Rng rng(seed);
  const Vocabulary vocab = Vocabulary::standard();
  std::vector<std::uint64_t> values = {0, 9, 10, 99, 100, 123456789, 999999999, 100000000};
  for (std::size_t c = 0; c < cases; ++c) {
    const std::size_t digits = 1 + rng.below(9);
    std::uint64_t lo = 1;
    for (std::size_t d = 1; d < digits; ++d) {
      lo *= 10;
    }
    values.push_back(digits == 1 ? rng.below(10) : lo + rng.below(9 * lo));
  }
  auto one_hot_value = [&](const std::string& text) {
    const TokenIds ids = vocab.encode(text);
    const DigitSpan span = find_digit_spans(vocab, ids).at(0);
    const auto positions = span.digit_positions();
    Tensor rows = Tensor::zeros({positions.size(), 10});
    for (std::size_t r = 0; r < positions.size(); ++r) {
      rows.at(r, static_cast<std::size_t>(vocab.digit_value(ids[positions[r]]))) = 1.0;
    }
    ad::Tape tape;
    return construct_value(tape.constant(rows), span).item();
  };
  for (std::uint64_t v : values) {
    const double built = one_hot_value(std::to_string(v));
    const double delta = std::abs(built - static_cast<double>(v));
    report.worst = std::max(report.worst, delta);
    ++report.cases;
    if (built != static_cast<double>(v)) {
      report.fail(std::to_string(v) + " rebuilt as " + std::to_string(built));
    }
  }
  const double decimal = std::abs(one_hot_value("0.98") - 0.98);
  ++report.cases;
  report.notes.push_back("|value(\"0.98\") - 0.98| = " + std::to_string(decimal));
  if (decimal > 1e-12) {
    report.fail("\"0.98\" rebuilt off by " + std::to_string(decimal));
  }
  return report;
}

// ---------------------------------------------------------------- spans

CheckReport spans_vs_regex(std::uint64_t seed, std::size_t cases) {
  CheckReport report;
  report.name = "find_digit_spans vs regex oracle";
  report.tolerance = 0.0;
  Rng rng(seed);
  const Vocabulary vocab = Vocabulary::standard();
  const std::string alphabet = "0123456789012345..+-=_a ";
  for (std::size_t c = 0; c < cases; ++c) {
    std::string text;
    const std::size_t len = rng.below(25);
    for (std::size_t i = 0; i < len; ++i) {
      text += alphabet[rng.below(alphabet.size())];
    }
    const auto spans = find_digit_spans(vocab, vocab.encode(text));
    const auto expected = oracle::regex_number_spans(text);
    bool same = spans.size() == expected.size();
    for (std::size_t i = 0; same && i < spans.size(); ++i) {
      same = spans[i].start == expected[i].first &&
             spans[i].end - spans[i].start == expected[i].second;
    }
    ++report.cases;
    if (!same) {
      report.worst += 1.0;
      report.fail("'" + text + "': " + std::to_string(spans.size()) + " spans vs " +
                  std::to_string(expected.size()) + " regex matches");
    }
  }
  return report;
}

std::vector<CheckReport> run_group(const std::string& group, std::uint64_t seed) {
  std::vector<CheckReport> out;
  const bool all = group == "all";
  if (all || group == "grads") {
    out.push_back(gradients(seed));
    out.push_back(emd_gradient_law(seed));
  }
  if (all || group == "emd") {
    out.push_back(emd_vs_oracle(seed));
    out.push_back(oracle_vs_enumeration());
    out.push_back(sinkhorn_vs_oracle(seed));
  }
  if (all || group == "gumbel") {
    out.push_back(gumbel_argmax(seed));
    out.push_back(construct_exactness(seed));
  }
  if (all || group == "spans") {
    out.push_back(spans_vs_regex(seed));
  }
  if (out.empty()) {
    throw ContractViolation("unknown check group '" + group +
                            "' (expected grads, emd, gumbel, spans or all)");
  }
  return out;
}

}  // namespace ntil::checks
