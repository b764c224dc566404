#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace ntil {

struct Example {
  std::string prompt;
  std::string target;
  std::string task;

  bool operator==(const Example&) const = default;
};

struct ArithmeticOptions {
  std::size_t max_digits = 3;
  /// Subset of "+-*".
  std::string ops = "+";
  /// Adds '/' with answers rounded half-up to two decimal places.
  bool decimal_division = false;
};

/// Operands uniform in [0, 10^max_digits); '/' divisors in [1, 10^max_digits).
/// Example i is drawn from its own seed mix_seed(seed, i), so output order is
/// canonical however generation is sharded.
std::vector<Example> gen_arithmetic(std::size_t n, std::uint64_t seed,
                                    const ArithmeticOptions& options = {});

/// Targets "H_MM" (H in 1..12, MM a multiple of 5) with prompts naming the
/// numeral each hand points at, e.g. "hour two minute eleven=" -> "2_55".
std::vector<Example> gen_clock(std::size_t n, std::uint64_t seed);

/// Half-up rounding of a / b to two decimals, e.g. (2, 3) -> "0.67".
std::string format_quotient(std::uint64_t a, std::uint64_t b);

struct DatasetSplit {
  std::vector<Example> train;
  std::vector<Example> test;
};

/// Assigns each example by a hash of its prompt, so no prompt lands in both
/// splits. `test_per_mille` of the prompt hash space goes to test.
DatasetSplit split_by_prompt(const std::vector<Example>& examples, unsigned test_per_mille = 100);

/// One JSON object per line with "prompt", "target", "task".
std::string to_jsonl(const std::vector<Example>& examples);
std::vector<Example> parse_jsonl(const std::string& text);
void write_jsonl(const std::string& path, const std::vector<Example>& examples);
std::vector<Example> read_jsonl(const std::string& path);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& text);

}  // namespace ntil
