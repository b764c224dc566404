#include "ntil/data.hpp"

#include <array>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "ntil/errors.hpp"
#include "ntil/rng.hpp"

namespace ntil {

namespace {

constexpr std::array<const char*, 13> kNumerals = {"",     "one",    "two",   "three", "four",
                                                   "five", "six",    "seven", "eight", "nine",
                                                   "ten",  "eleven", "twelve"};

std::uint64_t pow10u(std::size_t k) {
  std::uint64_t v = 1;
  for (std::size_t i = 0; i < k; ++i) {
    v *= 10;
  }
  return v;
}

}  // namespace

std::string format_quotient(std::uint64_t a, std::uint64_t b) {
  require(b > 0, "division by zero");
  const std::uint64_t hundredths = (200 * a + b) / (2 * b);
  std::string frac = std::to_string(hundredths % 100);
  if (frac.size() < 2) {
    frac.insert(0, "0");
  }
  return std::to_string(hundredths / 100) + "." + frac;
}

std::vector<Example> gen_arithmetic(std::size_t n, std::uint64_t seed,
                                    const ArithmeticOptions& options) {
  require(n >= 1, "gen_arithmetic: n must be >= 1");
  require(options.max_digits >= 1 && options.max_digits <= 6, "max_digits must be in 1..6");
  std::string ops;
  for (char op : options.ops) {
    require(op == '+' || op == '-' || op == '*', std::string("unsupported operator '") + op + "'");
    if (ops.find(op) == std::string::npos) {
      ops += op;
    }
  }
  if (options.decimal_division) {
    ops += '/';
  }
  require(!ops.empty(), "gen_arithmetic: no operators selected");
  const std::uint64_t bound = pow10u(options.max_digits);

  std::vector<Example> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, i));
    const char op = ops[rng.below(ops.size())];
    const std::uint64_t a = rng.below(bound);
    const std::uint64_t b = op == '/' ? 1 + rng.below(bound - 1) : rng.below(bound);
    std::string answer;
    switch (op) {
      case '+':
        answer = std::to_string(a + b);
        break;
      case '-':
        answer = a >= b ? std::to_string(a - b) : "-" + std::to_string(b - a);
        break;
      case '*':
        answer = std::to_string(a * b);
        break;
      default:
        answer = format_quotient(a, b);
        break;
    }
    out.push_back({std::to_string(a) + op + std::to_string(b) + "=", answer, "arithmetic"});
  }
  return out;
}

std::vector<Example> gen_clock(std::size_t n, std::uint64_t seed) {
  require(n >= 1, "gen_clock: n must be >= 1");
  std::vector<Example> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, i));
    const std::uint64_t label = rng.below(144);
    const std::uint64_t hour = 1 + label / 12;
    const std::uint64_t minute = 5 * (label % 12);
    const std::uint64_t minute_mark = minute == 0 ? 12 : minute / 5;
    std::string mm = std::to_string(minute);
    if (mm.size() < 2) {
      mm.insert(0, "0");
    }
    out.push_back(
        {std::string("hour ") + kNumerals[hour] + " minute " + kNumerals[minute_mark] + "=",
         std::to_string(hour) + "_" + mm, "clock"});
  }
  return out;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

DatasetSplit split_by_prompt(const std::vector<Example>& examples, unsigned test_per_mille) {
  require(test_per_mille <= 1000, "test_per_mille must be <= 1000");
  DatasetSplit split;
  for (const Example& ex : examples) {
    (fnv1a(ex.prompt) % 1000 < test_per_mille ? split.test : split.train).push_back(ex);
  }
  return split;
}

std::string to_jsonl(const std::vector<Example>& examples) {
  std::string out;
  for (const Example& ex : examples) {
    nlohmann::ordered_json j;
    j["prompt"] = ex.prompt;
    j["target"] = ex.target;
    j["task"] = ex.task;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<Example> parse_jsonl(const std::string& text) {
  std::vector<Example> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    try {
      const auto j = nlohmann::json::parse(line);
      Example ex{j.at("prompt").get<std::string>(), j.at("target").get<std::string>(),
                 j.value("task", std::string("arithmetic"))};
      require(!ex.target.empty(), "empty target");
      out.push_back(std::move(ex));
    } catch (const std::exception& e) {
      throw std::runtime_error("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_jsonl(const std::string& path, const std::vector<Example>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write " + path);
  }
  out << to_jsonl(examples);
}

std::vector<Example> read_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open dataset " + path);
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_jsonl(buffer.str());
}

}  // namespace ntil
