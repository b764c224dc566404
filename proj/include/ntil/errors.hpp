#pragma once

#include <stdexcept>
#include <string>
#include <type_traits>

namespace ntil {

/// Violated precondition: shape mismatch, out-of-range span, bad argument.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Input outside the mathematical domain of an operation (log of x <= 0).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Text or id that the vocabulary cannot represent.
class EncodingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An oracle-backed invariant did not hold.
class VerificationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) {
    throw ContractViolation(message);
  }
}

/// Same, with the message built only on failure.
template <typename MakeMessage>
requires std::is_invocable_r_v<std::string, MakeMessage>
inline void require(bool condition, MakeMessage&& make_message) {
  if (!condition) {
    throw ContractViolation(make_message());
  }
}

}  // namespace ntil
