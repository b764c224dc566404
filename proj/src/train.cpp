#include "ntil/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "ntil/errors.hpp"

namespace ntil {

namespace fs = std::filesystem;

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::Ce:
      return "ce";
    case LossMode::Emd:
      return "emd";
    case LossMode::Ntil:
      return "ntil";
  }
  return "?";
}

LossMode parse_loss_mode(const std::string& text) {
  if (text == "ce") {
    return LossMode::Ce;
  }
  if (text == "emd") {
    return LossMode::Emd;
  }
  if (text == "ntil") {
    return LossMode::Ntil;
  }
  throw ContractViolation("unknown loss mode '" + text + "' (expected ce, emd or ntil)");
}

// ---------------------------------------------------------------- config

void TrainingConfig::validate() const {
  ntil.validate();
  require(learning_rate > 0.0, "learning rate must be > 0");
  require(batch_size >= 1, "batch size must be >= 1");
  require(grad_clip > 0.0, "grad_clip must be > 0");
}

nlohmann::ordered_json TrainingConfig::to_json() const {
  nlohmann::ordered_json j;
  j["loss"] = to_string(mode);
  j["alpha"] = ntil.alpha;
  j["beta"] = ntil.beta;
  j["sigma"] = ntil.sigma;
  j["lambda"] = ntil.lambda;
  j["tau"] = ntil.tau;
  j["noise_scale"] = ntil.noise_scale;
  j["epsilon"] = ntil.epsilon;
  j["lr"] = learning_rate;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["seed"] = seed;
  j["grad_clip"] = grad_clip;
  j["ce_on_digits"] = ce_on_digits;
  j["eval_every"] = eval_every;
  j["max_new_tokens"] = max_new_tokens;
  j["train_data"] = train_data;
  j["test_data"] = test_data;
  j["out_dir"] = out_dir;
  j["resume"] = resume;
  j["arch"] = to_string(model.arch);
  j["embed_dim"] = model.embed_dim;
  j["hidden_dim"] = model.hidden_dim;
  j["context_len"] = model.context_len;
  return j;
}

TrainingConfig TrainingConfig::from_json(const nlohmann::json& j) {
  return from_json(j, TrainingConfig{});
}

TrainingConfig TrainingConfig::from_json(const nlohmann::json& j, TrainingConfig base) {
  require(j.is_object(), "training config must be a flat JSON object");
  static const std::vector<std::string> known = {
      "loss",        "alpha",        "beta",       "sigma",          "lambda",     "tau",
      "noise_scale", "epsilon",      "lr",         "batch_size",     "epochs",     "seed",
      "grad_clip",   "ce_on_digits", "eval_every", "max_new_tokens", "train_data", "test_data",
      "out_dir",     "resume",       "arch",       "embed_dim",      "hidden_dim", "context_len"};
  for (const auto& item : j.items()) {
    require(std::find(known.begin(), known.end(), item.key()) != known.end(),
            "unknown training config key '" + item.key() + "'");
  }
  TrainingConfig c = std::move(base);
  auto number = [&](const char* key, double& field) {
    if (j.contains(key)) {
      field = j.at(key).get<double>();
    }
  };
  auto count = [&](const char* key, std::size_t& field) {
    if (j.contains(key)) {
      field = j.at(key).get<std::size_t>();
    }
  };
  auto text = [&](const char* key, std::string& field) {
    if (j.contains(key)) {
      field = j.at(key).get<std::string>();
    }
  };
  if (j.contains("loss")) {
    c.mode = parse_loss_mode(j.at("loss").get<std::string>());
  }
  number("alpha", c.ntil.alpha);
  number("beta", c.ntil.beta);
  number("sigma", c.ntil.sigma);
  number("lambda", c.ntil.lambda);
  number("tau", c.ntil.tau);
  number("noise_scale", c.ntil.noise_scale);
  number("epsilon", c.ntil.epsilon);
  number("lr", c.learning_rate);
  number("grad_clip", c.grad_clip);
  count("batch_size", c.batch_size);
  count("epochs", c.epochs);
  count("eval_every", c.eval_every);
  count("max_new_tokens", c.max_new_tokens);
  count("embed_dim", c.model.embed_dim);
  count("hidden_dim", c.model.hidden_dim);
  count("context_len", c.model.context_len);
  if (j.contains("seed")) {
    c.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("ce_on_digits")) {
    c.ce_on_digits = j.at("ce_on_digits").get<bool>();
  }
  if (j.contains("arch")) {
    c.model.arch = parse_architecture(j.at("arch").get<std::string>());
  }
  text("train_data", c.train_data);
  text("test_data", c.test_data);
  text("out_dir", c.out_dir);
  text("resume", c.resume);
  return c;
}

NtilParams TrainingConfig::effective_params() const {
  NtilParams p = ntil;
  if (mode == LossMode::Emd) {
    p.alpha = 0.0;
    p.beta = 0.0;
    p.sigma = 0.0;
  }
  return p;
}

// ---------------------------------------------------------------- records

nlohmann::ordered_json StepRecord::to_json() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["epoch"] = epoch;
  j["mode"] = ntil::to_string(mode);
  j["ce"] = ce;
  j["emd_weighted"] = emd_weighted;
  j["relative"] = relative;
  j["magnitude"] = magnitude;
  j["ntil"] = ntil;
  j["total"] = total;
  return j;
}

bool StepRecord::same_values(const StepRecord& o) const {
  return step == o.step && epoch == o.epoch && ce == o.ce && emd_weighted == o.emd_weighted &&
         relative == o.relative && magnitude == o.magnitude && ntil == o.ntil && total == o.total;
}

nlohmann::ordered_json EvalMetrics::to_json() const {
  nlohmann::ordered_json j;
  j["count"] = count;
  j["exact_match"] = exact_match;
  j["numeric_total"] = numeric_total;
  j["numeric_count"] = numeric_count;
  j["mean_abs_error"] = mean_abs_error;
  j["median_abs_error"] = median_abs_error;
  j["failure_rate"] = failure_rate;
  j["clock_count"] = clock_count;
  j["clock_failures"] = clock_failures;
  j["mean_time_gap_hours"] = mean_time_gap;
  return j;
}

std::string EvalMetrics::table() const {
  std::ostringstream out;
  out << std::left << std::setw(24) << "metric"
      << "value\n";
  out << std::setw(24) << "examples" << count << '\n';
  out << std::setw(24) << "exact_match" << std::fixed << std::setprecision(4) << exact_match
      << '\n';
  if (numeric_total > 0) {
    out << std::setw(24) << "mean_abs_error" << mean_abs_error << '\n';
    out << std::setw(24) << "median_abs_error" << median_abs_error << '\n';
    out << std::setw(24) << "failure_rate" << failure_rate << '\n';
  }
  if (clock_count > 0) {
    out << std::setw(24) << "mean_time_gap_hours" << mean_time_gap << '\n';
    out << std::setw(24) << "clock_failures" << clock_failures << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------- encoding

EncodedExample encode_example(const Vocabulary& vocab, const Example& example) {
  require(!example.target.empty(), "example has an empty target");
  EncodedExample enc;
  const TokenIds prompt = vocab.encode(example.prompt);
  const TokenIds answer = vocab.encode(example.target);
  enc.input.push_back(vocab.bos_id());
  enc.input.insert(enc.input.end(), prompt.begin(), prompt.end());
  enc.prompt_len = enc.input.size() - 1;
  enc.input.insert(enc.input.end(), answer.begin(), answer.end());
  enc.target = answer;
  enc.target.push_back(vocab.eos_id());
  enc.spans = find_digit_spans(vocab, enc.target);
  return enc;
}

BatchTargets batch_targets(const std::vector<const EncodedExample*>& batch) {
  BatchTargets out;
  const std::size_t b = batch.size();
  for (std::size_t i = 0; i < b; ++i) {
    const EncodedExample& ex = *batch[i];
    TargetSequence seq{out.rows.size(), ex.target, ex.spans};
    for (std::size_t j = 0; j < ex.target.size(); ++j) {
      out.rows.push_back((ex.prompt_len + j) * b + i);
    }
    out.sequences.push_back(std::move(seq));
  }
  return out;
}

// ---------------------------------------------------------------- optimizer

namespace {

struct Adam {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  std::vector<Tensor> m;
  std::vector<Tensor> v;

  explicit Adam(const Parameters& params) {
    for (const NamedTensor& t : params.tensors) {
      m.push_back(Tensor::zeros(t.tensor.shape));
      v.push_back(Tensor::zeros(t.tensor.shape));
    }
  }

  void step(Parameters& params, const std::vector<Tensor>& grads, double lr, std::uint64_t t) {
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
    for (std::size_t p = 0; p < grads.size(); ++p) {
      auto& w = params.tensors[p].tensor.values;
      const auto& g = grads[p].values;
      auto& mp = m[p].values;
      auto& vp = v[p].values;
      for (std::size_t i = 0; i < w.size(); ++i) {
        mp[i] = kBeta1 * mp[i] + (1.0 - kBeta1) * g[i];
        vp[i] = kBeta2 * vp[i] + (1.0 - kBeta2) * g[i] * g[i];
        w[i] -= lr * (mp[i] / c1) / (std::sqrt(vp[i] / c2) + kEps);
      }
    }
  }

  std::vector<NamedTensor> state(const Parameters& params) const {
    std::vector<NamedTensor> out;
    for (std::size_t p = 0; p < m.size(); ++p) {
      out.push_back({"adam.m." + params.tensors[p].name, m[p]});
    }
    for (std::size_t p = 0; p < v.size(); ++p) {
      out.push_back({"adam.v." + params.tensors[p].name, v[p]});
    }
    return out;
  }

  void restore(const Parameters& params, const std::vector<NamedTensor>& saved) {
    require(saved.size() == 2 * m.size(), "checkpoint optimizer state does not match the model");
    for (std::size_t p = 0; p < m.size(); ++p) {
      require(saved[p].name == "adam.m." + params.tensors[p].name &&
                  saved[m.size() + p].name == "adam.v." + params.tensors[p].name,
              "checkpoint optimizer state is out of order");
      m[p] = saved[p].tensor;
      v[p] = saved[m.size() + p].tensor;
    }
  }
};

void clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor& g : grads) {
    for (double x : g.values) {
      sq += x * x;
    }
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (Tensor& g : grads) {
      for (double& x : g.values) {
        x *= factor;
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------- training

TrainResult train(const TrainingConfig& config, const std::vector<Example>& train_set,
                  const std::vector<Example>& test_set, const Vocabulary& vocab) {
  config.validate();
  require(!train_set.empty(), "training set is empty");

  std::vector<EncodedExample> encoded;
  encoded.reserve(train_set.size());
  std::size_t longest = 0;
  for (const Example& ex : train_set) {
    encoded.push_back(encode_example(vocab, ex));
    longest = std::max(longest, encoded.back().input.size());
  }
  ModelConfig model_config = config.model;
  model_config.vocab_size = vocab.size();
  model_config.seed = config.seed;
  require(longest <= model_config.context_len,
          "context_len " + std::to_string(model_config.context_len) +
              " is shorter than the longest training sequence (" + std::to_string(longest) + ")");

  TrainResult result;
  Checkpoint& ck = result.checkpoint;
  ck.params = init(model_config);
  Adam adam(ck.params);
  Rng rng(mix_seed(config.seed, 1));
  if (!config.resume.empty()) {
    Checkpoint saved = load_checkpoint(config.resume);
    require(saved.params.config == model_config,
            "resume checkpoint was trained with another model config");
    ck.params = std::move(saved.params);
    adam.restore(ck.params, saved.optimizer_state);
    ck.step = saved.step;
    ck.epoch = saved.epoch;
    rng.restore(saved.rng_state);
  }

  std::ofstream log_file;
  if (!config.out_dir.empty()) {
    fs::create_directories(fs::path(config.out_dir) / "checkpoints");
    log_file.open(fs::path(config.out_dir) / "metrics.jsonl", std::ios::app);
    if (!log_file) {
      throw std::runtime_error("cannot write metric log in " + config.out_dir);
    }
  }

  const NtilParams params = config.effective_params();
  const LossOptions loss_options{config.ce_on_digits};
  std::vector<std::size_t> order(encoded.size());

  for (std::uint64_t epoch = ck.epoch; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(i)]);
    }
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      std::vector<const EncodedExample*> batch;
      std::vector<TokenIds> inputs;
      for (std::size_t i = begin; i < end; ++i) {
        batch.push_back(&encoded[order[i]]);
        inputs.push_back(encoded[order[i]].input);
      }

      ad::Tape tape;
      const BoundParameters bound(tape, ck.params, true);
      const ad::Var logits = forward_batch(bound, inputs, vocab.pad_id());
      const BatchTargets targets = batch_targets(batch);
      const ad::Var rows = ad::gather_rows(logits, targets.rows);
      const LossResult loss = ntil_loss(rows, targets.sequences, vocab, params, rng, loss_options);

      StepRecord rec;
      rec.step = ++ck.step;
      rec.epoch = epoch;
      rec.mode = config.mode;
      rec.ce = loss.breakdown.ce;
      rec.emd_weighted = loss.breakdown.emd_weighted;
      rec.relative = loss.breakdown.relative;
      rec.magnitude = loss.breakdown.magnitude;
      rec.ntil = loss.breakdown.ntil;
      rec.total = config.mode == LossMode::Ce ? loss.breakdown.ce : loss.breakdown.total;
      if (!std::isfinite(rec.total)) {
        throw DivergenceError("non-finite loss at step " + std::to_string(rec.step) + " (ce=" +
                              std::to_string(rec.ce) + ", ntil=" + std::to_string(rec.ntil) + ")");
      }

      tape.backward(config.mode == LossMode::Ce ? loss.ce : loss.total);
      std::vector<Tensor> grads = bound.gradients();
      clip_global_norm(grads, config.grad_clip);
      adam.step(ck.params, grads, config.learning_rate, ck.step);

      if (log_file.is_open()) {
        log_file << rec.to_json().dump() << '\n';
      }
      result.log.push_back(rec);
    }
    ck.epoch = epoch + 1;
    ck.rng_state = rng.state();
    ck.optimizer_state = adam.state(ck.params);
    ck.metadata = {{"config", config.to_json()}};

    const bool last = ck.epoch == config.epochs;
    if (!test_set.empty() &&
        (last || (config.eval_every > 0 && ck.epoch % config.eval_every == 0))) {
      result.evals.push_back(evaluate(ck.params, test_set, vocab, config.max_new_tokens));
      if (!config.out_dir.empty()) {
        std::ofstream eval_file(fs::path(config.out_dir) / "eval.jsonl", std::ios::app);
        nlohmann::ordered_json j;
        j["epoch"] = ck.epoch;
        j["metrics"] = result.evals.back().to_json();
        eval_file << j.dump() << '\n';
      }
    }
    if (!config.out_dir.empty()) {
      const fs::path dir = fs::path(config.out_dir) / "checkpoints";
      save_checkpoint(ck, (dir / ("epoch_" + std::to_string(ck.epoch) + ".ckpt")).string());
      save_checkpoint(ck, (dir / "last.ckpt").string());
    }
  }
  ck.rng_state = rng.state();
  ck.optimizer_state = adam.state(ck.params);
  if (ck.metadata.empty()) {
    ck.metadata = {{"config", config.to_json()}};
  }
  return result;
}

// ---------------------------------------------------------------- evaluation

std::optional<double> parse_number(const std::string& text) {
  std::size_t i = 0;
  if (i < text.size() && text[i] == '-') {
    ++i;
  }
  const std::size_t int_start = i;
  while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
    ++i;
  }
  if (i == int_start) {
    return std::nullopt;
  }
  if (i < text.size() && text[i] == '.') {
    ++i;
    const std::size_t frac_start = i;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
      ++i;
    }
    if (i == frac_start) {
      return std::nullopt;
    }
  }
  if (i != text.size()) {
    return std::nullopt;
  }
  return std::strtod(text.c_str(), nullptr);
}

std::optional<int> parse_clock(const std::string& text) {
  const std::size_t sep = text.find('_');
  if (sep == std::string::npos || sep == 0 || sep > 2 || text.size() != sep + 3) {
    return std::nullopt;
  }
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (i != sep && !std::isdigit(static_cast<unsigned char>(text[i]))) {
      return std::nullopt;
    }
  }
  const int hour = std::stoi(text.substr(0, sep));
  const int minute = std::stoi(text.substr(sep + 1));
  if (hour < 1 || hour > 12 || minute > 59) {
    return std::nullopt;
  }
  return (hour % 12) * 60 + minute;
}

double clock_gap_hours(const std::string& predicted, const std::string& truth) {
  const auto p = parse_clock(predicted);
  const auto t = parse_clock(truth);
  require(p.has_value(), "'" + predicted + "' is not a clock reading");
  require(t.has_value(), "'" + truth + "' is not a clock reading");
  const int diff = std::abs(*p - *t) % 720;
  return std::min(diff, 720 - diff) / 60.0;
}

EvalMetrics evaluate(const Parameters& params, const std::vector<Example>& examples,
                     const Vocabulary& vocab, std::size_t max_new_tokens) {
  require(!examples.empty(), "evaluation set is empty");
  EvalMetrics m;
  std::vector<double> errors;
  std::vector<double> gaps;
  std::size_t exact = 0;
  for (const Example& ex : examples) {
    TokenIds prompt{vocab.bos_id()};
    const TokenIds body = vocab.encode(ex.prompt);
    prompt.insert(prompt.end(), body.begin(), body.end());
    const std::string predicted =
        vocab.decode(generate(params, prompt, max_new_tokens, vocab.eos_id()));
    m.predictions.push_back(predicted);
    ++m.count;
    exact += predicted == ex.target ? 1 : 0;
    if (ex.task == "clock") {
      ++m.clock_count;
      if (parse_clock(predicted) && parse_clock(ex.target)) {
        gaps.push_back(clock_gap_hours(predicted, ex.target));
      } else {
        ++m.clock_failures;
      }
      continue;
    }
    ++m.numeric_total;
    const auto p = parse_number(predicted);
    const auto t = parse_number(ex.target);
    if (p && t) {
      errors.push_back(std::abs(*p - *t));
    }
  }
  m.exact_match = static_cast<double>(exact) / static_cast<double>(m.count);
  m.numeric_count = errors.size();
  if (m.numeric_total > 0) {
    m.failure_rate =
        1.0 - static_cast<double>(errors.size()) / static_cast<double>(m.numeric_total);
  }
  if (!errors.empty()) {
    m.mean_abs_error =
        std::accumulate(errors.begin(), errors.end(), 0.0) / static_cast<double>(errors.size());
    std::sort(errors.begin(), errors.end());
    const std::size_t mid = errors.size() / 2;
    m.median_abs_error = errors.size() % 2 ? errors[mid] : 0.5 * (errors[mid - 1] + errors[mid]);
  }
  if (!gaps.empty()) {
    m.mean_time_gap =
        std::accumulate(gaps.begin(), gaps.end(), 0.0) / static_cast<double>(gaps.size());
  }
  return m;
}

}  // namespace ntil
