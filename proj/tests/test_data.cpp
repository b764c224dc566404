#include <doctest.h>

#include <set>
#include <string>

#include "ntil/data.hpp"
#include "ntil/errors.hpp"
#include "ntil/train.hpp"
#include "ntil/vocab.hpp"

using namespace ntil;

namespace {

long long eval_prompt(const std::string& prompt) {
  const auto op = prompt.find_first_of("+-*", 1);
  const long long a = std::stoll(prompt.substr(0, op));
  const long long b = std::stoll(prompt.substr(op + 1, prompt.size() - op - 2));
  switch (prompt[op]) {
    case '+':
      return a + b;
    case '-':
      return a - b;
    default:
      return a * b;
  }
}

}  // namespace

TEST_CASE("arithmetic answers are correct and deterministic") {
  const auto examples = gen_arithmetic(500, 11, {3, "+-*", false});
  CHECK(examples == gen_arithmetic(500, 11, {3, "+-*", false}));
  for (const Example& e : examples) {
    CHECK(e.task == "arithmetic");
    REQUIRE(e.prompt.back() == '=');
    CHECK(std::to_string(eval_prompt(e.prompt)) == e.target);
  }
  CHECK_FALSE(gen_arithmetic(10, 12) == gen_arithmetic(10, 11));
}

TEST_CASE("prefixes do not depend on n") {
  const auto a = gen_arithmetic(20, 5);
  const auto b = gen_arithmetic(40, 5);
  CHECK(std::equal(a.begin(), a.end(), b.begin()));
}

TEST_CASE("decimal division") {
  CHECK(format_quotient(49, 50) == "0.98");
  CHECK(format_quotient(1, 8) == "0.13");  // 0.125 rounds half up
  CHECK(format_quotient(10, 5) == "2.00");
  for (const Example& e : gen_arithmetic(200, 3, {3, "", true})) {
    const auto slash = e.prompt.find('/');
    REQUIRE(slash != std::string::npos);
    const auto a = std::stoull(e.prompt.substr(0, slash));
    const auto b = std::stoull(e.prompt.substr(slash + 1, e.prompt.size() - slash - 2));
    CHECK(b > 0);
    CHECK(e.target == format_quotient(a, b));
  }
}

TEST_CASE("clock examples") {
  const Vocabulary v = Vocabulary::standard();
  for (const Example& e : gen_clock(300, 2)) {
    CHECK(e.task == "clock");
    CHECK(parse_clock(e.target).has_value());
    CHECK_NOTHROW(v.encode(e.prompt));
  }
}

TEST_CASE("split keeps every prompt on one side") {
  const auto examples = gen_arithmetic(3000, 4);
  const DatasetSplit s = split_by_prompt(examples, 100);
  CHECK(s.train.size() + s.test.size() == examples.size());
  std::set<std::string> train_prompts;
  for (const Example& e : s.train) {
    train_prompts.insert(e.prompt);
  }
  for (const Example& e : s.test) {
    CHECK(train_prompts.count(e.prompt) == 0);
  }
  CHECK(s.test.size() > 200);
  CHECK(s.test.size() < 400);
}

TEST_CASE("jsonl round-trip") {
  const auto examples = gen_arithmetic(50, 8, {3, "+-", true});
  const std::string text = to_jsonl(examples);
  CHECK(parse_jsonl(text) == examples);
  CHECK(text.substr(0, 11) == "{\"prompt\":\"");
  CHECK_THROWS(parse_jsonl("{\"prompt\": 1}\n"));
}

TEST_CASE("generator arguments are validated") {
  CHECK_THROWS_AS(gen_arithmetic(5, 1, {0, "+", false}), ContractViolation);
  CHECK_THROWS_AS(gen_arithmetic(5, 1, {3, "^", false}), ContractViolation);
  CHECK_THROWS_AS(gen_arithmetic(5, 1, {3, "", false}), ContractViolation);
}
