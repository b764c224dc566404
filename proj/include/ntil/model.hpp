#pragma once

#include <cstddef>
#include <cstdint>
#include <json.hpp>
#include <map>
#include <string>
#include <vector>

#include "ntil/autodiff.hpp"
#include "ntil/rng.hpp"
#include "ntil/vocab.hpp"

namespace ntil {

enum class Architecture { Recurrent, Attention };

std::string to_string(Architecture arch);
Architecture parse_architecture(const std::string& text);

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 128;
  std::size_t context_len = 64;
  Architecture arch = Architecture::Recurrent;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
  bool operator==(const NamedTensor&) const = default;
};

/// Ordered, uniquely named parameter tensors.
struct Parameters {
  ModelConfig config;
  std::vector<NamedTensor> tensors;

  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  std::size_t count() const;
  bool operator==(const Parameters&) const = default;
};

/// Closed-form parameter count of a config.
std::size_t parameter_count(const ModelConfig& config);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) draws from Rng(config.seed).
Parameters init(const ModelConfig& config);

/// Parameters recorded on a tape, as leaves (trainable) or constants.
class BoundParameters {
 public:
  BoundParameters(ad::Tape& tape, const Parameters& params, bool trainable);

  ad::Var operator[](const std::string& name) const;
  const ModelConfig& config() const { return config_; }
  ad::Tape& tape() const { return *tape_; }
  /// Gradients in parameter order, after backward().
  std::vector<Tensor> gradients() const;

 private:
  ad::Tape* tape_;
  ModelConfig config_;
  std::vector<std::string> names_;
  std::map<std::string, ad::Var> vars_;
};

/// Logits for a right-padded batch. Row t * batch.size() + b holds the
/// next-token logits after reading batch[b][0..t]; rows past a sequence's
/// end are padding.
ad::Var forward_batch(const BoundParameters& params, const std::vector<TokenIds>& batch,
                      TokenId pad_id);

/// Logits (T x V) for one sequence; row t depends only on tokens 0..t.
ad::Var forward(const BoundParameters& params, const TokenIds& ids);

/// Decodes up to `max_new` tokens after `prompt`, stopping at `eos` (which is
/// not returned). Greedy picks the lowest-index argmax; otherwise samples from
/// softmax(logits) using `rng`.
TokenIds generate(const Parameters& params, const TokenIds& prompt, std::size_t max_new,
                  TokenId eos, bool greedy = true, Rng* rng = nullptr);

/// Everything needed to resume training bit-for-bit.
struct Checkpoint {
  Parameters params;
  std::vector<NamedTensor> optimizer_state;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  std::string rng_state;
  nlohmann::json metadata = nlohmann::json::object();

  bool operator==(const Checkpoint&) const = default;
};

inline constexpr int kCheckpointVersion = 1;

/// Text header (magic, version, JSON with config and counters) followed by
/// named arrays: u32 name length, name, u32 rank, u64 dims, f64 values, all
/// little-endian.
void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ntil
