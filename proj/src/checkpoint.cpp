#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ntil/errors.hpp"
#include "ntil/model.hpp"

namespace ntil {

namespace {

constexpr std::string_view kMagic = "NTILCKPT";

template <class T>
void write_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(std::begin(bytes), std::end(bytes));
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T read_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) {
    throw std::runtime_error("checkpoint truncated");
  }
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(std::begin(bytes), std::end(bytes));
  }
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

void write_array(std::ostream& out, const NamedTensor& t) {
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
  out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.tensor.rank()));
  for (std::size_t d : t.tensor.shape) {
    write_le<std::uint64_t>(out, d);
  }
  for (double v : t.tensor.values) {
    write_le<double>(out, v);
  }
}

NamedTensor read_array(std::istream& in) {
  NamedTensor t;
  const auto name_len = read_le<std::uint32_t>(in);
  t.name.resize(name_len);
  in.read(t.name.data(), name_len);
  const auto rank = read_le<std::uint32_t>(in);
  Shape shape(rank);
  for (auto& d : shape) {
    d = read_le<std::uint64_t>(in);
  }
  std::vector<double> values(shape_size(shape));
  for (double& v : values) {
    v = read_le<double>(in);
  }
  t.tensor = Tensor(std::move(shape), std::move(values));
  return t;
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  const nlohmann::json header = {
      {"format_version", kCheckpointVersion},
      {"model", checkpoint.params.config.to_json()},
      {"step", checkpoint.step},
      {"epoch", checkpoint.epoch},
      {"rng_state", checkpoint.rng_state},
      {"parameter_arrays", checkpoint.params.tensors.size()},
      {"optimizer_arrays", checkpoint.optimizer_state.size()},
      {"metadata", checkpoint.metadata},
  };
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write checkpoint " + path);
  }
  out << kMagic << ' ' << kCheckpointVersion << '\n' << text.size() << '\n' << text << '\n';
  for (const NamedTensor& t : checkpoint.params.tensors) {
    write_array(out, t);
  }
  for (const NamedTensor& t : checkpoint.optimizer_state) {
    write_array(out, t);
  }
  if (!out) {
    throw std::runtime_error("failed writing checkpoint " + path);
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open checkpoint " + path);
  }
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != kMagic || version != kCheckpointVersion) {
    throw std::runtime_error(path + " is not a version-" + std::to_string(kCheckpointVersion) +
                             " checkpoint");
  }
  std::size_t header_len = 0;
  in >> header_len;
  in.get();
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  in.get();
  if (!in) {
    throw std::runtime_error("checkpoint header truncated");
  }
  const nlohmann::json header = nlohmann::json::parse(text);

  Checkpoint ck;
  ck.params.config = ModelConfig::from_json(header.at("model"));
  ck.step = header.at("step").get<std::uint64_t>();
  ck.epoch = header.at("epoch").get<std::uint64_t>();
  ck.rng_state = header.at("rng_state").get<std::string>();
  ck.metadata = header.at("metadata");
  const auto n_params = header.at("parameter_arrays").get<std::size_t>();
  const auto n_opt = header.at("optimizer_arrays").get<std::size_t>();
  for (std::size_t i = 0; i < n_params; ++i) {
    ck.params.tensors.push_back(read_array(in));
  }
  for (std::size_t i = 0; i < n_opt; ++i) {
    ck.optimizer_state.push_back(read_array(in));
  }
  const Parameters reference = init(ck.params.config);
  require(reference.tensors.size() == ck.params.tensors.size(),
          "checkpoint parameter set does not match its config");
  for (std::size_t i = 0; i < reference.tensors.size(); ++i) {
    require(reference.tensors[i].name == ck.params.tensors[i].name &&
                reference.tensors[i].tensor.shape == ck.params.tensors[i].tensor.shape,
            "checkpoint parameter '" + ck.params.tensors[i].name + "' does not match its config");
  }
  return ck;
}

}  // namespace ntil
