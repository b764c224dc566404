#pragma once

// Numerical token integrity loss.
//
// Token level: each digit position contributes the one-hot earth mover's
// distance sum_i |x_i - y_i| * |i - k| over the ten digit values, scaled by an
// exponential place-value weight (1 + sigma)^(n - i - 1) that favors leading
// digits. Sequence level: each numeric span is rebuilt as a differentiable
// value from Gumbel-softmax digit rows and compared with the target value by
// relative and magnitude deviation. The per-span objective is
//
//   W_exp * EMD + alpha * relative + beta * magnitude,
//
// averaged over spans, then over sequences, and mixed with cross-entropy as
// total = CE + lambda * NTIL.

#include <cstddef>
#include <span>
#include <vector>

#include "ntil/autodiff.hpp"
#include "ntil/rng.hpp"
#include "ntil/vocab.hpp"

namespace ntil {

struct NtilParams {
  double alpha = 0.2;
  double beta = 0.2;
  double sigma = 0.2;
  double lambda = 0.3;
  double tau = 0.1;
  double noise_scale = 0.0;
  double epsilon = 1e-8;

  /// Throws ContractViolation unless tau, epsilon > 0 and the rest >= 0.
  void validate() const;
};

/// Predicted distribution over the ten digit values and the target digit.
struct DistributionPair {
  ad::Var pred;  // shape [10]
  std::size_t target = 0;
};

struct SpanLoss {
  std::size_t sequence = 0;
  DigitSpan span;
  double emd_weighted = 0.0;
  double relative = 0.0;
  double magnitude = 0.0;
  double predicted_value = 0.0;
  double target_value = 0.0;
};

struct LossBreakdown {
  double ce = 0.0;
  double emd_weighted = 0.0;
  double relative = 0.0;
  double magnitude = 0.0;
  double ntil = 0.0;
  double total = 0.0;
  std::vector<SpanLoss> per_span;
};

/// Differentiable results of ntil_loss plus their recorded values.
struct LossResult {
  ad::Var ce;
  ad::Var ntil;
  ad::Var total;
  LossBreakdown breakdown;
};

struct LossOptions {
  /// When false, digit positions inside spans are dropped from the CE mean.
  bool ce_on_digits = true;
};

/// Target tokens for rows [row_offset, row_offset + ids.size()) of the logits.
struct TargetSequence {
  std::size_t row_offset = 0;
  TokenIds ids;
  std::vector<DigitSpan> spans;
};

/// Mean over rows of -log softmax(row)[target].
ad::Var cross_entropy(ad::Var logits, std::span<const TokenId> targets);

ad::Var emd_digit(const DistributionPair& pair);
/// Row-wise emd_digit of an (n x 10) probability matrix; result shape [n].
ad::Var emd_digit_rows(ad::Var probs, std::span<const std::size_t> targets);

/// [(1 + sigma)^(n - i - 1)] for i = 0..n-1.
std::vector<double> exp_position_weights(std::size_t n, double sigma);

/// softmax((log_softmax(logits) + noise_scale * g) / tau) along the last
/// axis, g ~ Gumbel(0, 1). Accepts a [10] vector or an (n x 10) matrix.
/// No draws are taken from `rng` when noise_scale is 0.
ad::Var gumbel_softmax(ad::Var logits, double tau, double noise_scale, Rng& rng);

/// sum_rows (row . [0..9]) * 10^p, p from integer_len - 1 down to -frac_len.
/// `digit_rows` has one row per digit of `span` (the '.' excluded).
ad::Var construct_value(ad::Var digit_rows, const DigitSpan& span);

/// |x - y| / (max(x, y) + epsilon).
ad::Var relative_deviation(ad::Var x, double y, const NtilParams& params);
/// ln((max(x, y) + epsilon) / (min(x, y) + epsilon)).
ad::Var magnitude_deviation(ad::Var x, double y, const NtilParams& params);

/// Full objective over teacher-forced logits (N x V) covering `sequences`.
LossResult ntil_loss(ad::Var logits, std::span<const TargetSequence> sequences,
                     const Vocabulary& vocab, const NtilParams& params, Rng& rng,
                     const LossOptions& options = {});

/// Single sequence: row t of `logits` predicts target_ids[t].
LossResult ntil_loss(ad::Var logits, const TokenIds& target_ids,
                     const std::vector<DigitSpan>& spans, const Vocabulary& vocab,
                     const NtilParams& params, Rng& rng, const LossOptions& options = {});

}  // namespace ntil
