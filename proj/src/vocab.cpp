#include "ntil/vocab.hpp"

#include <cstdlib>
#include <fstream>
#include <unordered_set>

#include "ntil/errors.hpp"

namespace ntil {

std::vector<std::size_t> DigitSpan::digit_positions() const {
  std::vector<std::size_t> out;
  out.reserve(digit_count());
  for (std::size_t p = start; p < end; ++p) {
    if (!decimal_pos || p != start + *decimal_pos) {
      out.push_back(p);
    }
  }
  return out;
}

Vocabulary Vocabulary::standard() {
  std::vector<std::string> symbols = {std::string(kPad), std::string(kBos), std::string(kEos)};
  for (char c = '0'; c <= '9'; ++c) {
    symbols.emplace_back(1, c);
  }
  for (char c : std::string_view(".+-*/=_ ")) {
    symbols.emplace_back(1, c);
  }
  for (char c = 'a'; c <= 'z'; ++c) {
    symbols.emplace_back(1, c);
  }
  return Vocabulary(std::move(symbols));
}

Vocabulary::Vocabulary(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
  char_to_id_.fill(-1);
  digit_value_.assign(symbols_.size(), -1);
  std::unordered_set<std::string> seen;
  bool have_pad = false;
  bool have_bos = false;
  bool have_eos = false;
  bool have_point = false;
  std::array<bool, 10> have_digit{};
  for (std::size_t id = 0; id < symbols_.size(); ++id) {
    const std::string& s = symbols_[id];
    if (s.empty()) {
      throw EncodingError("vocabulary symbol " + std::to_string(id) + " is empty");
    }
    if (!seen.insert(s).second) {
      throw EncodingError("duplicate vocabulary symbol '" + s + "'");
    }
    if (s == kPad) {
      pad_ = id;
      have_pad = true;
    } else if (s == kBos) {
      bos_ = id;
      have_bos = true;
    } else if (s == kEos) {
      eos_ = id;
      have_eos = true;
    } else if (s.size() == 1) {
      const auto c = static_cast<unsigned char>(s[0]);
      char_to_id_[c] = static_cast<int>(id);
      if (c >= '0' && c <= '9') {
        digit_ids_[c - '0'] = id;
        digit_value_[id] = c - '0';
        have_digit[c - '0'] = true;
      } else if (c == '.') {
        point_ = id;
        have_point = true;
      }
    } else {
      throw EncodingError("vocabulary symbol '" + s + "' is neither a character nor a marker");
    }
  }
  for (int d = 0; d < 10; ++d) {
    if (!have_digit[d]) {
      throw EncodingError("vocabulary lacks digit '" + std::to_string(d) + "'");
    }
  }
  if (!have_pad || !have_bos || !have_eos || !have_point) {
    throw EncodingError("vocabulary lacks one of <pad>, <bos>, <eos>, '.'");
  }
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open vocabulary file " + path);
  }
  std::vector<std::string> symbols;
  std::string line;
  while (std::getline(in, line)) {
    // A line holding a single space is the space symbol; only strip CR.
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (!line.empty()) {
      symbols.push_back(line);
    }
  }
  return Vocabulary(std::move(symbols));
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write vocabulary file " + path);
  }
  for (const std::string& s : symbols_) {
    out << s << '\n';
  }
}

TokenIds Vocabulary::encode(std::string_view text) const {
  TokenIds ids;
  ids.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const int id = char_to_id_[static_cast<unsigned char>(text[i])];
    if (id < 0) {
      throw EncodingError("character '" + std::string(1, text[i]) + "' at offset " +
                          std::to_string(i) + " is not in the vocabulary");
    }
    ids.push_back(static_cast<TokenId>(id));
  }
  return ids;
}

std::string Vocabulary::decode(const TokenIds& ids) const {
  std::string text;
  for (TokenId id : ids) {
    text += symbol(id);
  }
  return text;
}

const std::string& Vocabulary::symbol(TokenId id) const {
  if (id >= symbols_.size()) {
    throw EncodingError("token id " + std::to_string(id) + " is outside the vocabulary of " +
                        std::to_string(symbols_.size()));
  }
  return symbols_[id];
}

bool Vocabulary::is_digit(TokenId id) const {
  return id < digit_value_.size() && digit_value_[id] >= 0;
}

int Vocabulary::digit_value(TokenId id) const {
  require(is_digit(id), "token " + std::to_string(id) + " is not a digit");
  return digit_value_[id];
}

std::vector<DigitSpan> find_digit_spans(const Vocabulary& vocab, const TokenIds& ids) {
  std::vector<DigitSpan> spans;
  const std::size_t n = ids.size();
  std::size_t i = 0;
  while (i < n) {
    if (!vocab.is_digit(ids[i])) {
      ++i;
      continue;
    }
    DigitSpan span;
    span.start = i;
    while (i < n && vocab.is_digit(ids[i])) {
      ++i;
    }
    span.integer_len = i - span.start;
    if (i + 1 < n && ids[i] == vocab.point_id() && vocab.is_digit(ids[i + 1])) {
      span.decimal_pos = i - span.start;
      ++i;
      const std::size_t frac_start = i;
      while (i < n && vocab.is_digit(ids[i])) {
        ++i;
      }
      span.frac_len = i - frac_start;
    }
    span.end = i;
    spans.push_back(span);
  }
  return spans;
}

double span_value(const Vocabulary& vocab, const TokenIds& ids, const DigitSpan& span) {
  require(span.start < span.end && span.end <= ids.size(), "span outside the token sequence");
  std::string text;
  for (std::size_t p = span.start; p < span.end; ++p) {
    text += vocab.symbol(ids[p]);
  }
  return std::strtod(text.c_str(), nullptr);
}

}  // namespace ntil
