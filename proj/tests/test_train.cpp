#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "ntil/data.hpp"
#include "ntil/errors.hpp"
#include "ntil/train.hpp"

using namespace ntil;
namespace fs = std::filesystem;

namespace {

TrainingConfig tiny(LossMode mode) {
  TrainingConfig c;
  c.mode = mode;
  c.batch_size = 16;
  c.epochs = 2;
  c.seed = 5;
  c.model.embed_dim = 16;
  c.model.hidden_dim = 24;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ntil_train_test_" + name);
  fs::remove_all(p);
  return p;
}

bool same_logs(const std::vector<StepRecord>& a, const std::vector<StepRecord>& b) {
  if (a.size() != b.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].same_values(b[i])) {
      return false;
    }
  }
  return true;
}

const Vocabulary kVocab = Vocabulary::standard();
const std::vector<Example> kData = gen_arithmetic(160, 21);

}  // namespace

TEST_CASE("training cross entropy falls over 200 steps") {
  TrainingConfig c = tiny(LossMode::Ntil);
  c.model = ModelConfig{};
  c.epochs = 4;
  const TrainResult r = train(c, gen_arithmetic(800, 3), {}, kVocab);
  REQUIRE(r.log.size() == 200);
  double previous = INFINITY;
  for (std::uint64_t e = 0; e < 4; ++e) {
    double total = 0.0;
    for (std::size_t i = e * 50; i < (e + 1) * 50; ++i) {
      total += r.log[i].ce;
    }
    CHECK(total / 50 < previous);
    previous = total / 50;
  }
}

TEST_CASE("logged total is ce + lambda * ntil") {
  const TrainResult r = train(tiny(LossMode::Ntil), kData, {}, kVocab);
  for (const StepRecord& s : r.log) {
    CHECK(std::abs(s.total - (s.ce + 0.3 * s.ntil)) <= 1e-9);
    CHECK(s.mode == LossMode::Ntil);
  }
}

TEST_CASE("ce mode logs total equal to ce") {
  const TrainResult r = train(tiny(LossMode::Ce), kData, {}, kVocab);
  for (const StepRecord& s : r.log) {
    CHECK(s.total == s.ce);
  }
}

TEST_CASE("reductions: lambda 0 is ce, zero alpha beta sigma is emd") {
  TrainingConfig ntil = tiny(LossMode::Ntil);
  ntil.ntil.lambda = 0.0;
  CHECK(same_logs(train(ntil, kData, {}, kVocab).log,
                  train(tiny(LossMode::Ce), kData, {}, kVocab).log));

  ntil = tiny(LossMode::Ntil);
  ntil.ntil.alpha = ntil.ntil.beta = ntil.ntil.sigma = 0.0;
  CHECK(same_logs(train(ntil, kData, {}, kVocab).log,
                  train(tiny(LossMode::Emd), kData, {}, kVocab).log));

  // The full objective differs.
  CHECK_FALSE(same_logs(train(tiny(LossMode::Ntil), kData, {}, kVocab).log,
                        train(tiny(LossMode::Emd), kData, {}, kVocab).log));
}

TEST_CASE("prompt positions receive no gradient") {
  std::vector<EncodedExample> encoded;
  for (std::size_t i = 0; i < 4; ++i) {
    encoded.push_back(encode_example(kVocab, kData[i]));
  }
  std::vector<const EncodedExample*> batch;
  std::vector<TokenIds> inputs;
  for (const EncodedExample& e : encoded) {
    batch.push_back(&e);
    inputs.push_back(e.input);
  }
  ModelConfig mc = tiny(LossMode::Ntil).model;
  mc.vocab_size = kVocab.size();
  const Parameters params = init(mc);
  ad::Tape tape;
  const BoundParameters bound(tape, params, true);
  const ad::Var logits = forward_batch(bound, inputs, kVocab.pad_id());
  const BatchTargets targets = batch_targets(batch);
  Rng rng(1);
  const LossResult loss = ntil_loss(ad::gather_rows(logits, targets.rows), targets.sequences,
                                    kVocab, NtilParams{}, rng);
  tape.backward(loss.total);
  const Tensor& g = logits.grad();
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (std::size_t t = 0; t < inputs[b].size(); ++t) {
      double norm = 0.0;
      for (std::size_t k = 0; k < kVocab.size(); ++k) {
        norm += std::abs(g.at(t * batch.size() + b, k));
      }
      if (t < encoded[b].prompt_len) {
        CHECK(norm == 0.0);
      } else {
        CHECK(norm > 0.0);
      }
    }
  }
}

TEST_CASE("resume continues bit-identically") {
  const fs::path dir = scratch("resume");
  TrainingConfig full = tiny(LossMode::Ntil);
  full.ntil.noise_scale = 1.0;  // exercises the saved rng state
  full.out_dir = (dir / "full").string();
  const TrainResult straight = train(full, kData, {}, kVocab);

  TrainingConfig first = full;
  first.epochs = 1;
  first.out_dir = (dir / "first").string();
  const TrainResult half = train(first, kData, {}, kVocab);

  TrainingConfig second = full;
  second.out_dir = (dir / "second").string();
  second.resume = (dir / "first" / "checkpoints" / "last.ckpt").string();
  const TrainResult rest = train(second, kData, {}, kVocab);

  std::vector<StepRecord> joined = half.log;
  joined.insert(joined.end(), rest.log.begin(), rest.log.end());
  CHECK(same_logs(joined, straight.log));
  CHECK(rest.checkpoint.params == straight.checkpoint.params);
  CHECK(rest.checkpoint.optimizer_state == straight.checkpoint.optimizer_state);
  CHECK(rest.checkpoint.rng_state == straight.checkpoint.rng_state);
  CHECK(rest.checkpoint.step == straight.checkpoint.step);
  CHECK(fs::exists(dir / "full" / "metrics.jsonl"));
  fs::remove_all(dir);
}

TEST_CASE("divergence aborts") {
  TrainingConfig c = tiny(LossMode::Ntil);
  c.learning_rate = 1e308;
  c.grad_clip = 1e300;
  CHECK_THROWS_AS(train(c, kData, {}, kVocab), DivergenceError);
}

TEST_CASE("evaluation metrics") {
  const TrainResult r = train(tiny(LossMode::Ce), kData, {}, kVocab);
  const std::vector<Example> test = gen_arithmetic(20, 99);
  const EvalMetrics m = evaluate(r.checkpoint.params, test, kVocab);
  CHECK(m.count == 20);
  CHECK(m.numeric_total == 20);
  CHECK(m.predictions.size() == 20);
  CHECK(m.failure_rate == doctest::Approx(1.0 - m.numeric_count / 20.0));
  CHECK_THROWS_AS(evaluate(r.checkpoint.params, {}, kVocab), ContractViolation);
}

TEST_CASE("numeric and clock parsing") {
  CHECK(parse_number("1157") == 1157.0);
  CHECK(parse_number("-12") == -12.0);
  CHECK(parse_number("0.98") == 0.98);
  CHECK_FALSE(parse_number("1.2.3").has_value());
  CHECK_FALSE(parse_number("").has_value());
  CHECK_FALSE(parse_number("12a").has_value());
  // 1.01 and 1.98 against 0.98.
  CHECK(std::abs(*parse_number("1.01") - 0.98) == doctest::Approx(0.03));
  CHECK(std::abs(*parse_number("1.98") - 0.98) == doctest::Approx(1.00));

  CHECK(clock_gap_hours("4_35", "6_20") == doctest::Approx(1.75).epsilon(1e-12));
  CHECK(clock_gap_hours("6_20", "6_20") == 0.0);
  CHECK(clock_gap_hours("12_00", "11_30") == doctest::Approx(0.5));
  CHECK(clock_gap_hours("12_00", "6_00") == doctest::Approx(6.0));
  CHECK_FALSE(parse_clock("13_00").has_value());
  CHECK_FALSE(parse_clock("4_60").has_value());
  CHECK_FALSE(parse_clock("4-35").has_value());
}

TEST_CASE("config handling") {
  TrainingConfig c;
  CHECK(c.ntil.alpha == 0.2);
  CHECK(c.ntil.lambda == 0.3);
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ContractViolation);
  CHECK_THROWS_AS(TrainingConfig::from_json(nlohmann::json{{"learnig_rate", 1.0}}),
                  ContractViolation);
  const TrainingConfig d =
      TrainingConfig::from_json(nlohmann::json{{"loss", "emd"}, {"lambda", 0.5}});
  CHECK(d.mode == LossMode::Emd);
  CHECK(d.ntil.lambda == 0.5);
  CHECK(d.effective_params().alpha == 0.0);
  CHECK(d.effective_params().sigma == 0.0);
  CHECK(TrainingConfig::from_json(nlohmann::json(d.to_json())).to_json() == d.to_json());
  CHECK_THROWS_AS(parse_loss_mode("mse"), ContractViolation);
}
