#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ntil {

using TokenId = std::size_t;
using TokenIds = std::vector<TokenId>;

/// Maximal run of digit tokens, optionally with one interior decimal point.
struct DigitSpan {
  std::size_t start = 0;                   // inclusive
  std::size_t end = 0;                     // exclusive
  std::optional<std::size_t> decimal_pos;  // offset of '.' within the span
  std::size_t integer_len = 0;
  std::size_t frac_len = 0;

  std::size_t digit_count() const { return integer_len + frac_len; }
  /// Token positions of the digits, left to right, skipping the '.'.
  std::vector<std::size_t> digit_positions() const;

  bool operator==(const DigitSpan&) const = default;
};

/// Character-level vocabulary. Multi-character symbols ("<bos>", ...) are
/// markers that only enter sequences by id.
class Vocabulary {
 public:
  static constexpr std::string_view kPad = "<pad>";
  static constexpr std::string_view kBos = "<bos>";
  static constexpr std::string_view kEos = "<eos>";

  /// Markers, digits, '.', arithmetic operators, '_', '=', ' ', a-z.
  static Vocabulary standard();
  explicit Vocabulary(std::vector<std::string> symbols);

  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  TokenIds encode(std::string_view text) const;
  std::string decode(const TokenIds& ids) const;

  std::size_t size() const { return symbols_.size(); }
  const std::vector<std::string>& symbols() const { return symbols_; }
  const std::string& symbol(TokenId id) const;

  TokenId pad_id() const { return pad_; }
  TokenId bos_id() const { return bos_; }
  TokenId eos_id() const { return eos_; }
  TokenId point_id() const { return point_; }

  /// Vocabulary ids of '0'..'9', indexed by digit value.
  const std::array<TokenId, 10>& digit_token_ids() const { return digit_ids_; }
  bool is_digit(TokenId id) const;
  /// Digit value 0-9 of a digit token.
  int digit_value(TokenId id) const;

  bool operator==(const Vocabulary& other) const { return symbols_ == other.symbols_; }

 private:
  std::vector<std::string> symbols_;
  std::array<int, 256> char_to_id_{};
  std::array<TokenId, 10> digit_ids_{};
  std::vector<int> digit_value_;
  TokenId pad_ = 0;
  TokenId bos_ = 0;
  TokenId eos_ = 0;
  TokenId point_ = 0;
};

/// Maximal numeric spans in `ids`. A '.' joins a span only when a digit sits
/// on each side of it, and at most one '.' joins any span.
std::vector<DigitSpan> find_digit_spans(const Vocabulary& vocab, const TokenIds& ids);

/// Numeric value of a span's tokens (magnitude only; signs are not spans).
double span_value(const Vocabulary& vocab, const TokenIds& ids, const DigitSpan& span);

}  // namespace ntil
