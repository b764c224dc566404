#include "ntil/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ntil/errors.hpp"

namespace ntil {

namespace {

struct ParamSpec {
  std::string name;
  Shape shape;
  std::size_t fan_in;
};

std::vector<ParamSpec> param_specs(const ModelConfig& c) {
  const std::size_t v = c.vocab_size;
  const std::size_t e = c.embed_dim;
  const std::size_t h = c.hidden_dim;
  if (c.arch == Architecture::Recurrent) {
    return {
        {"embed", {v, e}, e},   {"gru.w_z", {e, h}, e}, {"gru.w_r", {e, h}, e},
        {"gru.w_n", {e, h}, e}, {"gru.u_z", {h, h}, h}, {"gru.u_r", {h, h}, h},
        {"gru.u_n", {h, h}, h}, {"gru.b_z", {h}, h},    {"gru.b_r", {h}, h},
        {"gru.b_n", {h}, h},    {"gru.b_hn", {h}, h},   {"out.w", {h, v}, h},
        {"out.b", {v}, h},
    };
  }
  return {
      {"embed", {v, e}, e},    {"pos_embed", {c.context_len, e}, e},
      {"attn.w_q", {e, e}, e}, {"attn.w_k", {e, e}, e},
      {"attn.w_v", {e, e}, e}, {"attn.w_o", {e, e}, e},
      {"mlp.w1", {e, h}, e},   {"mlp.b1", {h}, e},
      {"mlp.w2", {h, e}, h},   {"mlp.b2", {e}, h},
      {"out.w", {e, v}, e},    {"out.b", {v}, e},
  };
}

ad::Var forward_recurrent(const BoundParameters& p, const std::vector<TokenIds>& batch,
                          std::size_t steps, TokenId pad_id) {
  ad::Tape& tape = p.tape();
  const std::size_t b = batch.size();
  const std::size_t h = p.config().hidden_dim;
  std::vector<std::size_t> tokens(steps * b);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < b; ++i) {
      tokens[t * b + i] = t < batch[i].size() ? batch[i][t] : pad_id;
    }
  }
  // Input projections for every step at once, (steps * b) x h each.
  const ad::Var x = ad::gather_rows(p["embed"], tokens);
  const ad::Var xz = ad::add_row(ad::matmul(x, p["gru.w_z"]), p["gru.b_z"]);
  const ad::Var xr = ad::add_row(ad::matmul(x, p["gru.w_r"]), p["gru.b_r"]);
  const ad::Var xn = ad::add_row(ad::matmul(x, p["gru.w_n"]), p["gru.b_n"]);

  std::vector<ad::Var> states;
  states.reserve(steps);
  ad::Var state = tape.constant(Tensor::zeros({b, h}));
  for (std::size_t t = 0; t < steps; ++t) {
    const ad::Var z = ad::sigmoid(ad::slice_rows(xz, t * b, b) + ad::matmul(state, p["gru.u_z"]));
    const ad::Var r = ad::sigmoid(ad::slice_rows(xr, t * b, b) + ad::matmul(state, p["gru.u_r"]));
    const ad::Var hn = ad::add_row(ad::matmul(state, p["gru.u_n"]), p["gru.b_hn"]);
    const ad::Var n = ad::tanh(ad::slice_rows(xn, t * b, b) + r * hn);
    state = n + z * (state - n);
    states.push_back(state);
  }
  return ad::add_row(ad::matmul(ad::concat_rows(states), p["out.w"]), p["out.b"]);
}

ad::Var forward_attention(const BoundParameters& p, const std::vector<TokenIds>& batch,
                          std::size_t steps, TokenId pad_id) {
  ad::Tape& tape = p.tape();
  const std::size_t b = batch.size();
  const double inv_sqrt_e = 1.0 / std::sqrt(static_cast<double>(p.config().embed_dim));
  Tensor mask = Tensor::zeros({steps, steps});
  for (std::size_t i = 0; i < steps; ++i) {
    for (std::size_t j = i + 1; j < steps; ++j) {
      mask.at(i, j) = -1e9;
    }
  }
  const ad::Var causal = tape.constant(std::move(mask));
  std::vector<std::size_t> positions(steps);
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  const ad::Var pos = ad::gather_rows(p["pos_embed"], positions);

  std::vector<ad::Var> per_sequence;
  for (std::size_t i = 0; i < b; ++i) {
    TokenIds ids = batch[i];
    ids.resize(steps, pad_id);
    const ad::Var x = ad::gather_rows(p["embed"], ids) + pos;
    const ad::Var q = ad::matmul(x, p["attn.w_q"]);
    const ad::Var k = ad::matmul(x, p["attn.w_k"]);
    const ad::Var v = ad::matmul(x, p["attn.w_v"]);
    const ad::Var scores = ad::scale(ad::matmul(q, ad::transpose(k)), inv_sqrt_e) + causal;
    const ad::Var attended = ad::matmul(ad::matmul(ad::softmax(scores, 1), v), p["attn.w_o"]);
    const ad::Var x2 = x + attended;
    const ad::Var hidden = ad::tanh(ad::add_row(ad::matmul(x2, p["mlp.w1"]), p["mlp.b1"]));
    per_sequence.push_back(x2 + ad::add_row(ad::matmul(hidden, p["mlp.w2"]), p["mlp.b2"]));
  }
  // Sequence-major -> step-major rows.
  std::vector<std::size_t> order(steps * b);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < b; ++i) {
      order[t * b + i] = i * steps + t;
    }
  }
  const ad::Var stacked = ad::gather_rows(ad::concat_rows(per_sequence), order);
  return ad::add_row(ad::matmul(stacked, p["out.w"]), p["out.b"]);
}

}  // namespace

std::string to_string(Architecture arch) {
  return arch == Architecture::Recurrent ? "gru" : "attention";
}

Architecture parse_architecture(const std::string& text) {
  if (text == "gru") {
    return Architecture::Recurrent;
  }
  if (text == "attention") {
    return Architecture::Attention;
  }
  throw ContractViolation("unknown architecture '" + text + "' (expected gru or attention)");
}

void ModelConfig::validate() const {
  require(vocab_size >= 1 && embed_dim >= 1 && hidden_dim >= 1 && context_len >= 1,
          "model dimensions must be >= 1");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"vocab_size", vocab_size},   {"embed_dim", embed_dim},  {"hidden_dim", hidden_dim},
          {"context_len", context_len}, {"arch", to_string(arch)}, {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.context_len = j.at("context_len").get<std::size_t>();
  c.arch = parse_architecture(j.at("arch").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

const Tensor& Parameters::get(const std::string& name) const {
  for (const NamedTensor& t : tensors) {
    if (t.name == name) {
      return t.tensor;
    }
  }
  throw ContractViolation("no parameter named '" + name + "'");
}

Tensor& Parameters::get(const std::string& name) {
  return const_cast<Tensor&>(std::as_const(*this).get(name));
}

std::size_t Parameters::count() const {
  std::size_t n = 0;
  for (const NamedTensor& t : tensors) {
    n += t.tensor.size();
  }
  return n;
}

std::size_t parameter_count(const ModelConfig& c) {
  const std::size_t v = c.vocab_size;
  const std::size_t e = c.embed_dim;
  const std::size_t h = c.hidden_dim;
  if (c.arch == Architecture::Recurrent) {
    return v * e + 3 * e * h + 3 * h * h + 4 * h + h * v + v;
  }
  return v * e + c.context_len * e + 4 * e * e + 2 * e * h + h + e + e * v + v;
}

Parameters init(const ModelConfig& config) {
  config.validate();
  Parameters params{config, {}};
  Rng rng(config.seed);
  for (const ParamSpec& spec : param_specs(config)) {
    Tensor t = Tensor::zeros(spec.shape);
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
    for (double& v : t.values) {
      v = bound * (2.0 * rng.uniform() - 1.0);
    }
    params.tensors.push_back({spec.name, std::move(t)});
  }
  return params;
}

BoundParameters::BoundParameters(ad::Tape& tape, const Parameters& params, bool trainable)
    : tape_(&tape), config_(params.config) {
  for (const NamedTensor& t : params.tensors) {
    names_.push_back(t.name);
    vars_.emplace(t.name, trainable ? tape.leaf(t.tensor) : tape.constant(t.tensor));
  }
}

ad::Var BoundParameters::operator[](const std::string& name) const {
  const auto it = vars_.find(name);
  require(it != vars_.end(), [&] { return "no parameter named '" + name + "'"; });
  return it->second;
}

std::vector<Tensor> BoundParameters::gradients() const {
  std::vector<Tensor> grads;
  grads.reserve(names_.size());
  for (const std::string& name : names_) {
    grads.push_back(vars_.at(name).grad());
  }
  return grads;
}

ad::Var forward_batch(const BoundParameters& params, const std::vector<TokenIds>& batch,
                      TokenId pad_id) {
  require(!batch.empty(), "forward on an empty batch");
  std::size_t steps = 0;
  for (const TokenIds& ids : batch) {
    require(!ids.empty(), "forward on an empty sequence");
    for (TokenId id : ids) {
      require(id < params.config().vocab_size,
              [&] { return "token id " + std::to_string(id) + " outside the model vocabulary"; });
    }
    steps = std::max(steps, ids.size());
  }
  require(steps <= params.config().context_len, [&] {
    return "sequence of " + std::to_string(steps) + " tokens exceeds context_len " +
           std::to_string(params.config().context_len);
  });
  if (params.config().arch == Architecture::Recurrent) {
    return forward_recurrent(params, batch, steps, pad_id);
  }
  return forward_attention(params, batch, steps, pad_id);
}

ad::Var forward(const BoundParameters& params, const TokenIds& ids) {
  return forward_batch(params, {ids}, 0);
}

TokenIds generate(const Parameters& params, const TokenIds& prompt, std::size_t max_new,
                  TokenId eos, bool greedy, Rng* rng) {
  require(!prompt.empty(), "generate needs a non-empty prompt");
  require(prompt.size() <= params.config.context_len, "prompt exceeds context_len");
  require(greedy || rng != nullptr, "sampling needs an rng");
  TokenIds sequence = prompt;
  TokenIds produced;
  while (produced.size() < max_new && sequence.size() < params.config.context_len) {
    ad::Tape tape;
    const BoundParameters bound(tape, params, false);
    const Tensor& logits = forward(bound, sequence).value();
    const std::size_t v = logits.cols();
    const double* row = logits.values.data() + (sequence.size() - 1) * v;
    TokenId next = 0;
    if (greedy) {
      next = static_cast<TokenId>(std::max_element(row, row + v) - row);
    } else {
      const double peak = *std::max_element(row, row + v);
      std::vector<double> cumulative(v);
      double total = 0.0;
      for (std::size_t i = 0; i < v; ++i) {
        total += std::exp(row[i] - peak);
        cumulative[i] = total;
      }
      const double u = rng->uniform() * total;
      next = static_cast<TokenId>(std::upper_bound(cumulative.begin(), cumulative.end(), u) -
                                  cumulative.begin());
      next = std::min<TokenId>(next, v - 1);
    }
    if (next == eos) {
      break;
    }
    produced.push_back(next);
    sequence.push_back(next);
  }
  return produced;
}

}  // namespace ntil
