#include <doctest.h>

#include <filesystem>

#include "ntil/errors.hpp"
#include "ntil/model.hpp"
#include "ntil/vocab.hpp"

using namespace ntil;

namespace {

ModelConfig small(Architecture arch) {
  ModelConfig c;
  c.vocab_size = Vocabulary::standard().size();
  c.embed_dim = 8;
  c.hidden_dim = 12;
  c.context_len = 16;
  c.arch = arch;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("parameter count matches the tensors") {
  for (Architecture arch : {Architecture::Recurrent, Architecture::Attention}) {
    const ModelConfig c = small(arch);
    const Parameters p = init(c);
    std::size_t total = 0;
    for (const NamedTensor& t : p.tensors) {
      total += t.tensor.size();
    }
    CHECK(total == parameter_count(c));
    CHECK(p.count() == total);
  }
}

TEST_CASE("init is deterministic per seed") {
  ModelConfig c = small(Architecture::Recurrent);
  CHECK(init(c) == init(c));
  const Parameters a = init(c);
  c.seed = 4;
  CHECK_FALSE(init(c) == a);
}

TEST_CASE("batched forward matches per-sequence forward") {
  const Vocabulary v = Vocabulary::standard();
  for (Architecture arch : {Architecture::Recurrent, Architecture::Attention}) {
    const Parameters params = init(small(arch));
    const std::vector<TokenIds> batch{v.encode("12+5=17"), v.encode("3+4=7")};
    ad::Tape tape;
    const BoundParameters bound(tape, params, false);
    const Tensor& all = forward_batch(bound, batch, v.pad_id()).value();
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const Tensor& one = forward(bound, batch[b]).value();
      for (std::size_t t = 0; t < batch[b].size(); ++t) {
        for (std::size_t k = 0; k < v.size(); ++k) {
          CHECK(all.at(t * batch.size() + b, k) == doctest::Approx(one.at(t, k)).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("logits at step t ignore later tokens") {
  const Vocabulary v = Vocabulary::standard();
  for (Architecture arch : {Architecture::Recurrent, Architecture::Attention}) {
    const Parameters params = init(small(arch));
    ad::Tape tape;
    const BoundParameters bound(tape, params, false);
    const Tensor& a = forward(bound, v.encode("123")).value();
    const Tensor& b = forward(bound, v.encode("129")).value();
    for (std::size_t k = 0; k < v.size(); ++k) {
      CHECK(a.at(1, k) == b.at(1, k));
    }
  }
}

TEST_CASE("generate is greedy and deterministic") {
  const Vocabulary v = Vocabulary::standard();
  const Parameters params = init(small(Architecture::Recurrent));
  const TokenIds prompt = v.encode("1+1=");
  const TokenIds out = generate(params, prompt, 5, v.eos_id());
  CHECK(out.size() <= 5);
  CHECK(out == generate(params, prompt, 5, v.eos_id()));
  Rng r1(9), r2(9);
  CHECK(generate(params, prompt, 5, v.eos_id(), false, &r1) ==
        generate(params, prompt, 5, v.eos_id(), false, &r2));
}

TEST_CASE("attention rejects sequences beyond its context") {
  const Vocabulary v = Vocabulary::standard();
  const Parameters params = init(small(Architecture::Attention));
  ad::Tape tape;
  const BoundParameters bound(tape, params, false);
  CHECK_THROWS_AS(forward(bound, TokenIds(17, v.encode("1")[0])), ContractViolation);
}

TEST_CASE("checkpoint round-trip") {
  Checkpoint ck;
  ck.params = init(small(Architecture::Recurrent));
  ck.optimizer_state = {{"adam.m.out.b", Tensor::vector({1.0, 2.0})}};
  ck.step = 42;
  ck.epoch = 2;
  ck.rng_state = "state";
  ck.metadata["note"] = "x";
  const auto path = std::filesystem::temp_directory_path() / "ntil_model_test.ckpt";
  save_checkpoint(ck, path.string());
  CHECK(load_checkpoint(path.string()) == ck);
  std::filesystem::remove(path);
  CHECK_THROWS(load_checkpoint(path.string()));
}

TEST_CASE("config validation and json") {
  ModelConfig c = small(Architecture::Attention);
  CHECK(ModelConfig::from_json(c.to_json()) == c);
  c.hidden_dim = 0;
  CHECK_THROWS_AS(c.validate(), ContractViolation);
  CHECK_THROWS_AS(parse_architecture("lstm"), ContractViolation);
}
