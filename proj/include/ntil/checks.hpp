#pragma once

// Oracle-backed verification suites with fixed seeds. Each returns a report
// instead of throwing so callers can print every discrepancy.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace ntil::checks {

struct CheckReport {
  std::string name;
  bool passed = true;
  std::size_t cases = 0;
  double worst = 0.0;      // largest discrepancy seen
  double tolerance = 0.0;  // pass threshold for `worst`
  std::vector<std::string> notes;
  std::vector<std::string> failures;

  void fail(std::string message);
  std::string summary() const;
};

/// emd_digit against the 1-D transport oracle on random pairs, |delta| <= 1e-9.
CheckReport emd_vs_oracle(std::uint64_t seed, std::size_t cases = 1000);
/// The CDF formula against exhaustive plan enumeration on every pair of
/// distributions over <= 4 bins with masses a / D, D <= 8.
CheckReport oracle_vs_enumeration();
/// Log-domain Sinkhorn at reg 1e-3 within 1e-2 of exact. 500 iterations are
/// not enough at this reg even with annealing; the budget is 10000.
CheckReport sinkhorn_vs_oracle(std::uint64_t seed, std::size_t cases = 100);

/// Central differences (h = 1e-5) against tape gradients, relative error
/// <= 1e-4 with a 1e-7 absolute floor, `points` random points per function.
CheckReport gradients(std::uint64_t seed, std::size_t points = 200);
/// |d emd_digit / d x_i| == |i - k| exactly, for i != k.
CheckReport emd_gradient_law(std::uint64_t seed, std::size_t cases = 1000);

/// tau = 0.1, no noise: argmax preserved and max entry >= 0.99 on random
/// logits whose top-2 gap is >= 0.5.
CheckReport gumbel_argmax(std::uint64_t seed, std::size_t cases = 10000);
/// construct_value on one-hot rows: integers up to 9 digits exactly, and
/// "0.98" within 1e-12.
CheckReport construct_exactness(std::uint64_t seed, std::size_t cases = 20000);

/// find_digit_spans against the regex oracle on random strings.
CheckReport spans_vs_regex(std::uint64_t seed, std::size_t cases = 5000);

/// Suites grouped the way the CLI exposes them: grads, emd, gumbel, spans.
std::vector<CheckReport> run_group(const std::string& group, std::uint64_t seed);

}  // namespace ntil::checks
