#include "ntil/loss.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "ntil/errors.hpp"

namespace ntil {

namespace {

constexpr std::size_t kDigits = 10;

double pow10(std::size_t exponent) {
  double v = 1.0;
  for (std::size_t i = 0; i < exponent; ++i) {
    v *= 10.0;
  }
  return v;
}

}  // namespace

void NtilParams::validate() const {
  require(tau > 0.0, "tau must be > 0");
  require(epsilon > 0.0, "epsilon must be > 0");
  require(alpha >= 0.0 && beta >= 0.0 && sigma >= 0.0 && lambda >= 0.0 && noise_scale >= 0.0,
          "alpha, beta, sigma, lambda and noise_scale must be >= 0");
}

ad::Var cross_entropy(ad::Var logits, std::span<const TokenId> targets) {
  const Tensor& lv = logits.value();
  require(lv.rank() == 2, "cross_entropy needs (positions x vocab) logits");
  require(lv.shape[0] == targets.size(), [&] {
    return "cross_entropy: " + std::to_string(lv.shape[0]) + " logit rows for " +
           std::to_string(targets.size()) + " targets";
  });
  require(!targets.empty(), "cross_entropy over zero positions");
  std::vector<std::size_t> idx(targets.begin(), targets.end());
  return ad::neg(ad::mean(ad::pick(ad::log_softmax(logits), idx)));
}

ad::Var emd_digit_rows(ad::Var probs, std::span<const std::size_t> targets) {
  const Tensor& pv = probs.value();
  require(pv.rank() == 2 && pv.shape[1] == kDigits, "emd_digit_rows needs (n x 10) probabilities");
  const std::size_t n = pv.shape[0];
  require(targets.size() == n, "emd_digit_rows: one target per row");
  Tensor onehot = Tensor::zeros({n, kDigits});
  Tensor distance = Tensor::zeros({n, kDigits});
  for (std::size_t r = 0; r < n; ++r) {
    require(targets[r] < kDigits, "digit target out of range 0-9");
    onehot.at(r, targets[r]) = 1.0;
    for (std::size_t i = 0; i < kDigits; ++i) {
      distance.at(r, i) = std::abs(static_cast<double>(i) - static_cast<double>(targets[r]));
    }
  }
  ad::Tape& tape = probs.tape();
  const ad::Var moved = ad::abs(probs - tape.constant(std::move(onehot)));
  const ad::Var cost = ad::sum(moved * tape.constant(std::move(distance)), 1);
  return ad::reshape(cost, {n});
}

ad::Var emd_digit(const DistributionPair& pair) {
  require(pair.pred.size() == kDigits, "DistributionPair.pred must have 10 entries");
  const std::size_t target[] = {pair.target};
  return ad::reshape(emd_digit_rows(ad::reshape(pair.pred, {1, kDigits}), target), {1});
}

std::vector<double> exp_position_weights(std::size_t n, double sigma) {
  require(n >= 1, "exp_position_weights: span has no digits");
  require(sigma >= 0.0, "exp_position_weights: sigma must be >= 0");
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = std::pow(1.0 + sigma, static_cast<double>(n - i - 1));
  }
  return w;
}

ad::Var gumbel_softmax(ad::Var logits, double tau, double noise_scale, Rng& rng) {
  require(tau > 0.0, "gumbel_softmax: tau must be > 0");
  const Tensor& lv = logits.value();
  require(lv.rank() == 1 || lv.rank() == 2, "gumbel_softmax needs a vector or row matrix");
  ad::Var perturbed = ad::log_softmax(logits);
  if (noise_scale > 0.0) {
    Tensor noise = Tensor::zeros(lv.shape);
    for (double& g : noise.values) {
      g = noise_scale * rng.gumbel();
    }
    perturbed = perturbed + logits.tape().constant(std::move(noise));
  }
  return ad::softmax(ad::scale(perturbed, 1.0 / tau), static_cast<int>(lv.rank()) - 1);
}

ad::Var construct_value(ad::Var digit_rows, const DigitSpan& span) {
  const Tensor& rv = digit_rows.value();
  require(rv.rank() == 2 && rv.shape[1] == kDigits, "construct_value needs (n x 10) rows");
  const std::size_t n = span.digit_count();
  require(rv.shape[0] == n, [&] {
    return "construct_value: " + std::to_string(rv.shape[0]) + " rows for a span of " +
           std::to_string(n) + " digits";
  });
  ad::Tape& tape = digit_rows.tape();
  std::vector<double> digits(kDigits);
  std::iota(digits.begin(), digits.end(), 0.0);
  const ad::Var expected = ad::matmul(digit_rows, tape.constant(Tensor({kDigits, 1}, digits)));
  // Integer place values first, one division for the fractional part, so
  // "0.98" comes out as the nearest double to 0.98.
  std::vector<double> place(n);
  for (std::size_t i = 0; i < n; ++i) {
    place[i] = pow10(n - 1 - i);
  }
  ad::Var value = ad::reshape(ad::matmul(tape.constant(Tensor({1, n}, place)), expected), {1});
  if (span.frac_len > 0) {
    value = value / tape.constant(Tensor::scalar(pow10(span.frac_len)));
  }
  return value;
}

ad::Var relative_deviation(ad::Var x, double y, const NtilParams& params) {
  const ad::Var target = x.tape().constant(Tensor::filled(x.shape(), y));
  return ad::abs(x - target) / ad::add_scalar(ad::max_elem(x, target), params.epsilon);
}

ad::Var magnitude_deviation(ad::Var x, double y, const NtilParams& params) {
  const ad::Var target = x.tape().constant(Tensor::filled(x.shape(), y));
  const ad::Var hi = ad::add_scalar(ad::max_elem(x, target), params.epsilon);
  const ad::Var lo = ad::add_scalar(ad::min_elem(x, target), params.epsilon);
  return ad::log(hi / lo);
}

LossResult ntil_loss(ad::Var logits, std::span<const TargetSequence> sequences,
                     const Vocabulary& vocab, const NtilParams& params, Rng& rng,
                     const LossOptions& options) {
  params.validate();
  const Tensor& lv = logits.value();
  require(lv.rank() == 2 && lv.shape[1] == vocab.size(), [&] {
    return "ntil_loss needs (positions x vocab) logits, got " + shape_string(lv.shape);
  });
  require(!sequences.empty(), "ntil_loss over zero sequences");
  ad::Tape& tape = logits.tape();
  const auto& digit_ids = vocab.digit_token_ids();
  const std::vector<std::size_t> digit_cols(digit_ids.begin(), digit_ids.end());

  // Rows entering the CE mean.
  std::vector<std::size_t> ce_rows;
  std::vector<TokenId> ce_targets;
  for (const TargetSequence& seq : sequences) {
    require(seq.row_offset + seq.ids.size() <= lv.shape[0],
            "target sequence extends past the logit rows");
    std::vector<bool> is_span_digit(seq.ids.size(), false);
    for (const DigitSpan& span : seq.spans) {
      require(span.start < span.end && span.end <= seq.ids.size(), [&] {
        return "span [" + std::to_string(span.start) + ", " + std::to_string(span.end) +
               ") out of range for " + std::to_string(seq.ids.size()) + " targets";
      });
      for (std::size_t p : span.digit_positions()) {
        is_span_digit[p] = true;
      }
    }
    for (std::size_t t = 0; t < seq.ids.size(); ++t) {
      if (options.ce_on_digits || !is_span_digit[t]) {
        ce_rows.push_back(seq.row_offset + t);
        ce_targets.push_back(seq.ids[t]);
      }
    }
  }
  ad::Var ce;
  if (ce_rows.empty()) {
    ce = tape.constant(Tensor::scalar(0.0));
  } else {
    bool identity = ce_rows.size() == lv.shape[0];
    for (std::size_t i = 0; identity && i < ce_rows.size(); ++i) {
      identity = ce_rows[i] == i;
    }
    ce = cross_entropy(identity ? logits : ad::gather_rows(logits, ce_rows), ce_targets);
  }

  LossResult result;
  LossBreakdown& bd = result.breakdown;
  const double seq_weight = 1.0 / static_cast<double>(sequences.size());
  ad::Var ntil;
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const TargetSequence& seq = sequences[s];
    if (seq.spans.empty()) {
      continue;
    }
    const double span_weight = seq_weight / static_cast<double>(seq.spans.size());
    for (const DigitSpan& span : seq.spans) {
      const std::vector<std::size_t> positions = span.digit_positions();
      std::vector<std::size_t> rows;
      std::vector<std::size_t> targets;
      for (std::size_t p : positions) {
        rows.push_back(seq.row_offset + p);
        targets.push_back(static_cast<std::size_t>(vocab.digit_value(seq.ids[p])));
      }
      const ad::Var digit_logits = ad::select_cols(ad::gather_rows(logits, rows), digit_cols);

      const ad::Var probs = ad::softmax(digit_logits, 1);
      const std::vector<double> w = exp_position_weights(positions.size(), params.sigma);
      const ad::Var emd =
          ad::sum(emd_digit_rows(probs, targets) * tape.constant(Tensor::vector(w)));

      const ad::Var value =
          construct_value(gumbel_softmax(digit_logits, params.tau, params.noise_scale, rng), span);
      const double target_value = span_value(vocab, seq.ids, span);
      const ad::Var rel = relative_deviation(value, target_value, params);
      const ad::Var mag = magnitude_deviation(value, target_value, params);

      const ad::Var span_loss = emd + ad::scale(rel, params.alpha) + ad::scale(mag, params.beta);
      const ad::Var weighted = ad::scale(span_loss, span_weight);
      ntil = ntil.valid() ? ntil + weighted : weighted;

      bd.per_span.push_back(
          SpanLoss{s, span, emd.item(), rel.item(), mag.item(), value.item(), target_value});
      bd.emd_weighted += span_weight * emd.item();
      bd.relative += span_weight * rel.item();
      bd.magnitude += span_weight * mag.item();
    }
  }
  if (!ntil.valid()) {
    ntil = tape.constant(Tensor::scalar(0.0));
  }
  result.ce = ce;
  result.ntil = ntil;
  result.total = ce + ad::scale(ntil, params.lambda);
  bd.ce = ce.item();
  bd.ntil = ntil.item();
  bd.total = result.total.item();
  return result;
}

LossResult ntil_loss(ad::Var logits, const TokenIds& target_ids,
                     const std::vector<DigitSpan>& spans, const Vocabulary& vocab,
                     const NtilParams& params, Rng& rng, const LossOptions& options) {
  require(logits.value().rank() == 2 && logits.value().shape[0] == target_ids.size(),
          "ntil_loss: one logit row per target token");
  const TargetSequence seq{0, target_ids, spans};
  return ntil_loss(logits, std::span<const TargetSequence>(&seq, 1), vocab, params, rng, options);
}

}  // namespace ntil
