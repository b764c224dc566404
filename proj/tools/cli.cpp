#include "cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "ntil/checks.hpp"
#include "ntil/data.hpp"
#include "ntil/errors.hpp"
#include "ntil/loss.hpp"
#include "ntil/model.hpp"
#include "ntil/train.hpp"
#include "ntil/vocab.hpp"

namespace ntil::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot read " + path);
  }
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buffer[1 << 16];
  while (in.read(buffer, sizeof(buffer)) || in.gcount() > 0) {
    EVP_DigestUpdate(ctx, buffer, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

/// RunManifest: written before any other output of a run.
class Manifest {
 public:
  Manifest(fs::path dir, std::string command, ordered_json config, std::uint64_t seed,
           const std::vector<std::string>& inputs)
      : path_(std::move(dir) / "manifest.json") {
    doc_["tool"] = "ntil";
    doc_["tool_version"] = kToolVersion;
    doc_["command"] = std::move(command);
    doc_["seed"] = seed;
    doc_["config"] = std::move(config);
    doc_["started_at"] = utc_now();
    ordered_json digests = ordered_json::object();
    for (const std::string& in : inputs) {
      if (!in.empty()) {
        digests[in] = "sha256:" + sha256_file(in);
      }
    }
    doc_["inputs"] = digests;
    write();
  }

  void finish(const ordered_json& outcome) {
    doc_["finished_at"] = utc_now();
    doc_["outcome"] = outcome;
    write();
  }

 private:
  void write() const {
    fs::create_directories(path_.parent_path());
    std::ofstream out(path_);
    if (!out) {
      throw std::runtime_error("cannot write " + path_.string());
    }
    out << doc_.dump(2) << '\n';
  }

  fs::path path_;
  ordered_json doc_;
};

std::uint64_t env_seed() {
  if (const char* s = std::getenv("NTIL_SEED")) {
    try {
      return std::stoull(s);
    } catch (const std::exception&) {
      throw ContractViolation(std::string("NTIL_SEED is not an integer: ") + s);
    }
  }
  return 0;
}

Vocabulary load_vocab(const std::string& path) {
  return path.empty() ? Vocabulary::standard() : Vocabulary::load(path);
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
  std::string task = "arithmetic";
  std::size_t n = 10000;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t max_digits = 3;
  std::string ops = "+";
  bool decimal = false;
  unsigned test_per_mille = 100;
};

int gen_data(const GenDataArgs& a) {
  const std::uint64_t seed = a.seed.value_or(env_seed());
  ordered_json config;
  config["task"] = a.task;
  config["n"] = a.n;
  config["seed"] = seed;
  config["max_digits"] = a.max_digits;
  config["ops"] = a.ops;
  config["decimal"] = a.decimal;
  config["test_per_mille"] = a.test_per_mille;
  Manifest manifest(a.out, "gen-data", config, seed, {});

  std::vector<Example> examples;
  if (a.task == "arithmetic") {
    examples = gen_arithmetic(a.n, seed, {a.max_digits, a.ops, a.decimal});
  } else if (a.task == "clock") {
    examples = gen_clock(a.n, seed);
  } else {
    throw ContractViolation("unknown task '" + a.task + "' (expected arithmetic or clock)");
  }
  const DatasetSplit split = split_by_prompt(examples, a.test_per_mille);
  const fs::path dir(a.out);
  write_jsonl((dir / "train.jsonl").string(), split.train);
  write_jsonl((dir / "test.jsonl").string(), split.test);
  Vocabulary::standard().save((dir / "vocab.txt").string());
  ordered_json outcome;
  outcome["train"] = split.train.size();
  outcome["test"] = split.test.size();
  manifest.finish(outcome);
  std::cout << "wrote " << split.train.size() << " train and " << split.test.size()
            << " test examples to " << a.out << '\n';
  return kSuccess;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config_path;
  std::optional<std::string> loss;
  std::optional<double> alpha, beta, sigma, lambda, tau, noise_scale, lr;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, batch_size;
  std::optional<std::string> train_data, test_data, out, resume, arch;
  std::string vocab;
};

TrainingConfig resolve_training_config(const TrainArgs& a) {
  TrainingConfig base;
  base.seed = env_seed();
  nlohmann::json file = nlohmann::json::object();
  if (!a.config_path.empty()) {
    std::ifstream in(a.config_path);
    if (!in) {
      throw std::runtime_error("cannot open config " + a.config_path);
    }
    file = nlohmann::json::parse(in);
    // A run manifest carries its resolved config; accept it as is.
    if (file.contains("tool") && file.contains("config")) {
      file = file["config"];
    }
  }
  TrainingConfig c = TrainingConfig::from_json(file, base);
  if (a.loss) c.mode = parse_loss_mode(*a.loss);
  if (a.alpha) c.ntil.alpha = *a.alpha;
  if (a.beta) c.ntil.beta = *a.beta;
  if (a.sigma) c.ntil.sigma = *a.sigma;
  if (a.lambda) c.ntil.lambda = *a.lambda;
  if (a.tau) c.ntil.tau = *a.tau;
  if (a.noise_scale) c.ntil.noise_scale = *a.noise_scale;
  if (a.lr) c.learning_rate = *a.lr;
  if (a.seed) c.seed = *a.seed;
  if (a.epochs) c.epochs = *a.epochs;
  if (a.batch_size) c.batch_size = *a.batch_size;
  if (a.train_data) c.train_data = *a.train_data;
  if (a.test_data) c.test_data = *a.test_data;
  if (a.out) c.out_dir = *a.out;
  if (a.resume) c.resume = *a.resume;
  if (a.arch) c.model.arch = parse_architecture(*a.arch);
  c.validate();
  require(!c.train_data.empty(), "no training data: pass --train-data or set train_data");
  require(!c.out_dir.empty(), "no output directory: pass --out or set out_dir");
  return c;
}

ordered_json run_training(const TrainingConfig& c, const std::string& vocab_path,
                          const std::string& command) {
  Manifest manifest(c.out_dir, command, c.to_json(), c.seed,
                    {c.train_data, c.test_data, c.resume, vocab_path});
  const Vocabulary vocab = load_vocab(vocab_path);
  const std::vector<Example> train_set = read_jsonl(c.train_data);
  const std::vector<Example> test_set =
      c.test_data.empty() ? std::vector<Example>{} : read_jsonl(c.test_data);
  const TrainResult result = train(c, train_set, test_set, vocab);

  ordered_json outcome;
  outcome["steps"] = result.checkpoint.step;
  outcome["epochs"] = result.checkpoint.epoch;
  if (!result.log.empty()) {
    outcome["final_step"] = result.log.back().to_json();
  }
  if (!result.evals.empty()) {
    outcome["final_eval"] = result.evals.back().to_json();
    std::ofstream table(fs::path(c.out_dir) / "eval.txt");
    table << result.evals.back().table();
  }
  manifest.finish(outcome);
  return outcome;
}

int train_command(const TrainArgs& a) {
  const TrainingConfig c = resolve_training_config(a);
  const ordered_json outcome = run_training(c, a.vocab, "train");
  std::cout << outcome.dump(2) << '\n';
  return kSuccess;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::string vocab;
  std::size_t max_new = 12;
};

int eval_command(const EvalArgs& a) {
  ordered_json config;
  config["checkpoint"] = a.checkpoint;
  config["data"] = a.data;
  config["max_new_tokens"] = a.max_new;
  Manifest manifest(a.out, "eval", config, 0, {a.checkpoint, a.data, a.vocab});
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const Vocabulary vocab = load_vocab(a.vocab);
  require(ck.params.config.vocab_size == vocab.size(),
          "checkpoint vocabulary size differs from the vocabulary in use");
  const std::vector<Example> examples = read_jsonl(a.data);
  require(!examples.empty(), "dataset " + a.data + " is empty");
  const EvalMetrics m = evaluate(ck.params, examples, vocab, a.max_new);
  {
    std::ofstream json_out(fs::path(a.out) / "metrics.json");
    json_out << m.to_json().dump(2) << '\n';
    std::ofstream table_out(fs::path(a.out) / "metrics.txt");
    table_out << m.table();
    std::ofstream pred_out(fs::path(a.out) / "predictions.jsonl");
    for (std::size_t i = 0; i < examples.size(); ++i) {
      ordered_json row;
      row["prompt"] = examples[i].prompt;
      row["target"] = examples[i].target;
      row["prediction"] = m.predictions[i];
      pred_out << row.dump() << '\n';
    }
  }
  manifest.finish(m.to_json());
  std::cout << m.table();
  return kSuccess;
}

// ---------------------------------------------------------------- inspect-loss

struct InspectArgs {
  std::string pred;
  std::string target;
  NtilParams params;
  bool json_only = false;
};

std::vector<std::vector<double>> read_distribution_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open distribution file " + path);
  }
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') {
      continue;
    }
    std::istringstream fields(line);
    std::vector<double> row;
    std::string token;
    while (fields >> token) {
      char* end = nullptr;
      const double v = std::strtod(token.c_str(), &end);
      require(end != token.c_str() && *end == '\0',
              "distribution line " + std::to_string(line_no) + ": '" + token + "' is not a number");
      row.push_back(v);
    }
    require(row.size() == 10, "distribution line " + std::to_string(line_no) + " has " +
                                  std::to_string(row.size()) + " entries, expected 10");
    double total = 0.0;
    for (double v : row) {
      require(v >= 0.0, "distribution line " + std::to_string(line_no) + " has a negative entry");
      total += v;
    }
    require(std::abs(total - 1.0) <= 1e-6,
            "distribution line " + std::to_string(line_no) + " sums to " + std::to_string(total));
    rows.push_back(std::move(row));
  }
  return rows;
}

int inspect_loss(const InspectArgs& a) {
  a.params.validate();
  const Vocabulary vocab = Vocabulary::standard();
  const TokenIds target = vocab.encode(a.target);
  require(!target.empty(), "empty target");
  const std::vector<DigitSpan> spans = find_digit_spans(vocab, target);
  const std::vector<std::vector<double>> rows = read_distribution_rows(a.pred);

  // Digit rows come from the file; every other target token is taken as
  // predicted with certainty.
  constexpr double kAbsent = -1e4;
  Tensor logits = Tensor::filled({target.size(), vocab.size()}, kAbsent);
  std::size_t next_row = 0;
  for (std::size_t t = 0; t < target.size(); ++t) {
    if (!vocab.is_digit(target[t])) {
      logits.at(t, target[t]) = 0.0;
      continue;
    }
    require(next_row < rows.size(), "distribution file has " + std::to_string(rows.size()) +
                                        " rows but the target has more digits");
    for (std::size_t d = 0; d < 10; ++d) {
      logits.at(t, vocab.digit_token_ids()[d]) = std::log(std::max(rows[next_row][d], 1e-300));
    }
    ++next_row;
  }
  require(next_row == rows.size(), "distribution file has " + std::to_string(rows.size()) +
                                       " rows for " + std::to_string(next_row) + " target digits");

  ad::Tape tape;
  Rng rng(env_seed());
  const LossBreakdown bd =
      ntil_loss(tape.constant(logits), target, spans, vocab, a.params, rng).breakdown;
  ordered_json j;
  j["target"] = a.target;
  j["ce"] = bd.ce;
  j["emd_weighted"] = bd.emd_weighted;
  j["relative"] = bd.relative;
  j["magnitude"] = bd.magnitude;
  j["ntil"] = bd.ntil;
  j["total"] = bd.total;
  ordered_json per_span = ordered_json::array();
  for (const SpanLoss& s : bd.per_span) {
    ordered_json sj;
    sj["start"] = s.span.start;
    sj["end"] = s.span.end;
    sj["emd_weighted"] = s.emd_weighted;
    sj["relative"] = s.relative;
    sj["magnitude"] = s.magnitude;
    sj["predicted_value"] = s.predicted_value;
    sj["target_value"] = s.target_value;
    per_span.push_back(sj);
  }
  j["per_span"] = per_span;
  std::cout << j.dump(2) << '\n';
  return kSuccess;
}

// ---------------------------------------------------------------- check

int check_command(const std::string& group, std::uint64_t seed) {
  bool ok = true;
  for (const checks::CheckReport& r : checks::run_group(group, seed)) {
    std::cout << r.summary() << '\n';
    for (const std::string& note : r.notes) {
      std::cout << "    " << note << '\n';
    }
    for (const std::string& f : r.failures) {
      std::cout << "    failure: " << f << '\n';
    }
    ok = ok && r.passed;
  }
  return ok ? kSuccess : kVerificationFailure;
}

// ---------------------------------------------------------------- sweep

struct SweepArgs {
  TrainArgs train;
  std::vector<std::string> grid;
};

int sweep_command(const SweepArgs& a) {
  const TrainingConfig base = resolve_training_config(a.train);
  std::vector<std::pair<std::string, std::vector<double>>> axes;
  for (const std::string& spec : a.grid) {
    const auto eq = spec.find('=');
    require(eq != std::string::npos && eq > 0, "grid axis '" + spec + "' is not key=v1,v2,...");
    std::pair<std::string, std::vector<double>> axis{spec.substr(0, eq), {}};
    std::istringstream values(spec.substr(eq + 1));
    std::string v;
    while (std::getline(values, v, ',')) {
      axis.second.push_back(std::stod(v));
    }
    require(!axis.second.empty(), "grid axis '" + axis.first + "' has no values");
    axes.push_back(std::move(axis));
  }
  require(!axes.empty(), "sweep needs at least one --grid axis");

  fs::create_directories(base.out_dir);
  std::ofstream csv(fs::path(base.out_dir) / "grid.csv");
  for (const auto& axis : axes) {
    csv << axis.first << ',';
  }
  csv << "cell,final_ce,final_ntil,final_total,exact_match,mean_abs_error,mean_time_gap_hours\n";

  std::vector<std::size_t> index(axes.size(), 0);
  for (std::size_t cell = 0;; ++cell) {
    nlohmann::json overrides = nlohmann::json::object();
    for (std::size_t i = 0; i < axes.size(); ++i) {
      overrides[axes[i].first] = axes[i].second[index[i]];
    }
    TrainingConfig c = TrainingConfig::from_json(overrides, base);
    std::ostringstream name;
    name << "cell_" << std::setw(3) << std::setfill('0') << cell;
    c.out_dir = (fs::path(base.out_dir) / name.str()).string();
    c.validate();
    const ordered_json outcome = run_training(c, a.train.vocab, "sweep");
    for (std::size_t i = 0; i < axes.size(); ++i) {
      csv << axes[i].second[index[i]] << ',';
    }
    csv << name.str();
    if (outcome.contains("final_step")) {
      const auto& s = outcome["final_step"];
      csv << ',' << s["ce"].get<double>() << ',' << s["ntil"].get<double>() << ','
          << s["total"].get<double>();
    } else {
      csv << ",,,";
    }
    if (outcome.contains("final_eval")) {
      const auto& e = outcome["final_eval"];
      csv << ',' << e["exact_match"].get<double>() << ',' << e["mean_abs_error"].get<double>()
          << ',' << e["mean_time_gap_hours"].get<double>();
    } else {
      csv << ",,,";
    }
    csv << '\n' << std::flush;
    std::cout << name.str() << ' ' << overrides.dump() << '\n';

    std::size_t axis = axes.size();
    while (axis > 0) {
      --axis;
      if (++index[axis] < axes[axis].second.size()) {
        break;
      }
      index[axis] = 0;
      if (axis == 0) {
        return kSuccess;
      }
    }
  }
}

void add_train_flags(CLI::App* cmd, TrainArgs& a) {
  cmd->add_option("--config", a.config_path, "Flat JSON training config");
  cmd->add_option("--loss", a.loss, "ce | emd | ntil")->check(CLI::IsMember({"ce", "emd", "ntil"}));
  cmd->add_option("--alpha", a.alpha, "Relative-deviation weight");
  cmd->add_option("--beta", a.beta, "Magnitude-deviation weight");
  cmd->add_option("--sigma", a.sigma, "Exponential position increment rate");
  cmd->add_option("--lambda", a.lambda, "NTIL mixing coefficient");
  cmd->add_option("--tau", a.tau, "Gumbel-softmax temperature");
  cmd->add_option("--noise-scale", a.noise_scale, "Gumbel noise multiplier");
  cmd->add_option("--lr", a.lr, "Learning rate");
  cmd->add_option("--seed", a.seed, "Seed (overrides config and NTIL_SEED)");
  cmd->add_option("--epochs", a.epochs, "Epochs");
  cmd->add_option("--batch-size", a.batch_size, "Batch size");
  cmd->add_option("--train-data", a.train_data, "Training JSONL");
  cmd->add_option("--test-data", a.test_data, "Held-out JSONL");
  cmd->add_option("--out", a.out, "Run directory");
  cmd->add_option("--resume", a.resume, "Checkpoint to resume from");
  cmd->add_option("--arch", a.arch, "gru | attention");
  cmd->add_option("--vocab", a.vocab, "Vocabulary file (default: built-in)");
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Numerical token integrity loss: data, training, evaluation, verification", "ntil"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic dataset");
  gen_cmd->add_option("--task", gen.task, "arithmetic | clock")
      ->check(CLI::IsMember({"arithmetic", "clock"}));
  gen_cmd->add_option("--n", gen.n, "Number of examples")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--seed", gen.seed, "Seed (overrides NTIL_SEED)");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--max-digits", gen.max_digits, "Operand digits")->check(CLI::Range(1, 6));
  gen_cmd->add_option("--ops", gen.ops, "Operators, subset of +-*");
  gen_cmd->add_flag("--decimal", gen.decimal, "Add division with 2-decimal answers");
  gen_cmd->add_option("--test-per-mille", gen.test_per_mille, "Held-out share of prompt hashes")
      ->check(CLI::Range(0, 1000));

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  add_train_flags(train_cmd, tr);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", ev.data, "JSONL dataset")->required();
  eval_cmd->add_option("--out", ev.out, "Output directory")->required();
  eval_cmd->add_option("--vocab", ev.vocab, "Vocabulary file (default: built-in)");
  eval_cmd->add_option("--max-new", ev.max_new, "Decode budget per example");

  InspectArgs in;
  auto* inspect_cmd = app.add_subcommand("inspect-loss", "Loss breakdown for given distributions");
  inspect_cmd->add_option("--pred", in.pred, "Rows of 10 digit probabilities")->required();
  inspect_cmd->add_option("--target", in.target, "Target text, e.g. 3 or 0.98")->required();
  inspect_cmd->add_option("--alpha", in.params.alpha);
  inspect_cmd->add_option("--beta", in.params.beta);
  inspect_cmd->add_option("--sigma", in.params.sigma);
  inspect_cmd->add_option("--lambda", in.params.lambda);
  inspect_cmd->add_option("--tau", in.params.tau);

  std::string group;
  std::uint64_t check_seed = 20240601;
  auto* check_cmd = app.add_subcommand("check", "Run oracle-backed verification suites");
  check_cmd->add_option("group", group, "grads | emd | gumbel | spans | all")
      ->required()
      ->check(CLI::IsMember({"grads", "emd", "gumbel", "spans", "all"}));
  check_cmd->add_option("--seed", check_seed, "Suite seed");

  SweepArgs sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "Train over a hyperparameter grid");
  add_train_flags(sweep_cmd, sw.train);
  sweep_cmd->add_option("--grid", sw.grid, "Axis as key=v1,v2,... (repeatable)")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kSuccess : kContractViolation;
  }

  try {
    if (*gen_cmd) return gen_data(gen);
    if (*train_cmd) return train_command(tr);
    if (*eval_cmd) return eval_command(ev);
    if (*inspect_cmd) return inspect_loss(in);
    if (*check_cmd) return check_command(group, check_seed);
    if (*sweep_cmd) return sweep_command(sw);
  } catch (const ContractViolation& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kContractViolation;
  } catch (const EncodingError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kContractViolation;
  } catch (const VerificationFailure& e) {
    std::cerr << "verification failed: " << e.what() << '\n';
    return kVerificationFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kContractViolation;
}

}  // namespace ntil::cli
