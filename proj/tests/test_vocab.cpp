#include <doctest.h>

#include <filesystem>

#include "ntil/errors.hpp"
#include "ntil/oracle.hpp"
#include "ntil/vocab.hpp"

using namespace ntil;

namespace {

std::vector<std::pair<std::size_t, std::size_t>> spans_of(const Vocabulary& v,
                                                          const std::string& s) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const DigitSpan& span : find_digit_spans(v, v.encode(s))) {
    out.emplace_back(span.start, span.end - span.start);
  }
  return out;
}

}  // namespace

TEST_CASE("encode and decode round-trip") {
  const Vocabulary v = Vocabulary::standard();
  const std::string text = "hour four minute seven=4_35";
  CHECK(v.decode(v.encode(text)) == text);
  CHECK(v.encode("0").size() == 1);
  CHECK(v.digit_value(v.encode("7")[0]) == 7);
  CHECK(v.is_digit(v.encode("0")[0]));
  CHECK_FALSE(v.is_digit(v.point_id()));
  CHECK(v.decode({v.bos_id(), v.encode("1")[0], v.eos_id()}) == "<bos>1<eos>");
}

TEST_CASE("unknown symbols name the character and offset") {
  const Vocabulary v = Vocabulary::standard();
  try {
    v.encode("12#4");
    FAIL("expected EncodingError");
  } catch (const EncodingError& e) {
    const std::string what = e.what();
    CHECK(what.find('#') != std::string::npos);
    CHECK(what.find('2') != std::string::npos);
  }
}

TEST_CASE("vocabulary validation") {
  CHECK_THROWS_AS(Vocabulary({"<pad>", "<bos>", "<eos>", "0", "0"}), EncodingError);
  CHECK_THROWS_AS(Vocabulary({"<pad>", "<bos>", "<eos>", "0", "1"}), EncodingError);
}

TEST_CASE("save and load preserve every symbol, including space") {
  const Vocabulary v = Vocabulary::standard();
  const auto path = std::filesystem::temp_directory_path() / "ntil_vocab_test.txt";
  v.save(path.string());
  CHECK(Vocabulary::load(path.string()) == v);
  std::filesystem::remove(path);
}

TEST_CASE("digit spans") {
  const Vocabulary v = Vocabulary::standard();
  const auto ids = v.encode("0.98");
  const auto spans = find_digit_spans(v, ids);
  REQUIRE(spans.size() == 1);
  CHECK(spans[0].integer_len == 1);
  CHECK(spans[0].frac_len == 2);
  CHECK(spans[0].decimal_pos == std::optional<std::size_t>(1));
  CHECK(spans[0].digit_positions() == std::vector<std::size_t>{0, 2, 3});
  CHECK(span_value(v, ids, spans[0]) == 0.98);

  CHECK(spans_of(v, "12+3.5=") == decltype(spans_of(v, ""))({{0, 2}, {3, 3}}));
  // A second point starts a new span; a trailing point is not part of one.
  CHECK(spans_of(v, "1.2.3") == decltype(spans_of(v, ""))({{0, 3}, {4, 1}}));
  CHECK(spans_of(v, "7. x") == decltype(spans_of(v, ""))({{0, 1}}));
  CHECK(spans_of(v, "abc").empty());
}

TEST_CASE("digit spans agree with the regex oracle on fixed strings") {
  const Vocabulary v = Vocabulary::standard();
  for (const std::string s : {"4_35", "0.98 and 1.01", "..5.", "99+1=100", "3.14.15"}) {
    CHECK(spans_of(v, s) == oracle::regex_number_spans(s));
  }
}
