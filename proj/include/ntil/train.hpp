#pragma once

#include <cstddef>
#include <cstdint>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "ntil/data.hpp"
#include "ntil/loss.hpp"
#include "ntil/model.hpp"
#include "ntil/vocab.hpp"

namespace ntil {

enum class LossMode { Ce, Emd, Ntil };

std::string to_string(LossMode mode);
LossMode parse_loss_mode(const std::string& text);

/// Fine-tuning rate used for large pretrained backbones; the toy model
/// trains from scratch and defaults to a much larger rate.
inline constexpr double kFineTuneLearningRate = 1e-5;

struct TrainingConfig {
  LossMode mode = LossMode::Ntil;
  NtilParams ntil;
  double learning_rate = 3e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  double grad_clip = 1.0;
  bool ce_on_digits = true;
  std::size_t eval_every = 0;  // epochs; 0 evaluates only at the end
  std::size_t max_new_tokens = 12;
  std::string train_data;
  std::string test_data;
  std::string out_dir;  // metric log and checkpoints; empty writes nothing
  std::string resume;   // checkpoint to continue from
  ModelConfig model;    // vocab_size and seed are filled in by train()

  void validate() const;
  /// Every resolved value, flat.
  nlohmann::ordered_json to_json() const;
  /// Overlays the keys present in a flat JSON object onto `base`.
  static TrainingConfig from_json(const nlohmann::json& j, TrainingConfig base);
  static TrainingConfig from_json(const nlohmann::json& j);
  /// Loss weights actually optimized: emd mode zeroes alpha, beta, sigma.
  NtilParams effective_params() const;
};

/// One optimizer step, as logged.
struct StepRecord {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  LossMode mode = LossMode::Ntil;
  double ce = 0.0;
  double emd_weighted = 0.0;
  double relative = 0.0;
  double magnitude = 0.0;
  double ntil = 0.0;
  double total = 0.0;

  nlohmann::ordered_json to_json() const;
  /// Same record without the mode tag; used to compare runs across modes.
  bool same_values(const StepRecord& other) const;
};

struct EvalMetrics {
  std::size_t count = 0;
  double exact_match = 0.0;
  std::size_t numeric_count = 0;  // arithmetic predictions that parsed
  std::size_t numeric_total = 0;  // arithmetic examples
  double mean_abs_error = 0.0;
  double median_abs_error = 0.0;
  double failure_rate = 0.0;  // unparseable arithmetic predictions
  std::size_t clock_count = 0;
  std::size_t clock_failures = 0;
  double mean_time_gap = 0.0;            // hours, over parseable clock predictions
  std::vector<std::string> predictions;  // decoded output per example, not serialized

  nlohmann::ordered_json to_json() const;
  std::string table() const;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<StepRecord> log;
  std::vector<EvalMetrics> evals;
};

/// Model input/targets for one example: <bos> prompt target <eos>, with
/// targets on the answer and <eos> only.
struct EncodedExample {
  TokenIds input;              // <bos> prompt target
  std::size_t prompt_len = 0;  // tokens before the first target row
  TokenIds target;             // target <eos>
  std::vector<DigitSpan> spans;
};

EncodedExample encode_example(const Vocabulary& vocab, const Example& example);

/// Logits rows of `forward_batch` output that predict each example's targets,
/// concatenated in batch order, plus the matching loss targets.
struct BatchTargets {
  std::vector<std::size_t> rows;
  std::vector<TargetSequence> sequences;
};
BatchTargets batch_targets(const std::vector<const EncodedExample*>& batch);

/// Teacher-forced training with Adam (0.9, 0.999, 1e-8) and global-norm
/// clipping. Deterministic per seed.
TrainResult train(const TrainingConfig& config, const std::vector<Example>& train_set,
                  const std::vector<Example>& test_set, const Vocabulary& vocab);

/// Exact match over greedy decodes; numeric error for arithmetic, time gap
/// for clock examples.
EvalMetrics evaluate(const Parameters& params, const std::vector<Example>& examples,
                     const Vocabulary& vocab, std::size_t max_new_tokens = 12);

/// Optional sign, digits, optional '.' and digits; nothing else.
std::optional<double> parse_number(const std::string& text);
/// "H_MM" with H in 1..12 and MM in 00..59, as minutes past 12:00.
std::optional<int> parse_clock(const std::string& text);
/// Shortest distance in hours between two readings on the 12-hour dial.
double clock_gap_hours(const std::string& predicted, const std::string& truth);

}  // namespace ntil
