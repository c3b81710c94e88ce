#include "cft/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace cft {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian; big-endian hosts unsupported");

constexpr char kMagic[8] = {'C', 'F', 'T', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"schema_version", 1},
          {"n_layers", c.n_layers},
          {"n_heads", c.n_heads},
          {"d_model", c.d_model},
          {"d_input", c.d_input},
          {"max_sequence_length", c.max_sequence_length},
          {"readout", c.readout == Readout::scalar ? "scalar" : "vocabulary"}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.n_layers = j.at("n_layers").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.d_input = j.at("d_input").get<int>();
  c.max_sequence_length = j.at("max_sequence_length").get<int>();
  const std::string r = j.at("readout").get<std::string>();
  if (r == "scalar") {
    c.readout = Readout::scalar;
  } else if (r == "vocabulary") {
    c.readout = Readout::vocabulary;
  } else {
    throw std::runtime_error("checkpoint: unknown readout '" + r + "'");
  }
  c.validate();
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& m, uint64_t seed, int64_t step) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  const std::string header = config_to_json(m.config).dump();
  write_pod<uint32_t>(os, static_cast<uint32_t>(header.size()));
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  write_pod<uint64_t>(os, seed);
  write_pod<int64_t>(os, step);
  write_pod<uint32_t>(os, static_cast<uint32_t>(m.params.size()));
  for (const auto& [name, t] : m.params) {
    write_pod<uint32_t>(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<uint32_t>(os, static_cast<uint32_t>(t->value.rows()));
    write_pod<uint32_t>(os, static_cast<uint32_t>(t->value.cols()));
    os.write(reinterpret_cast<const char*>(t->value.data()),
             static_cast<std::streamsize>(sizeof(double) * t->value.size()));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  const auto header_len = read_pod<uint32_t>(is);
  std::string header(header_len, '\0');
  is.read(header.data(), header_len);
  if (!is) throw std::runtime_error("checkpoint: truncated header in " + path);

  Checkpoint ck;
  const ModelConfig config = config_from_json(nlohmann::json::parse(header));
  ck.seed = read_pod<uint64_t>(is);
  ck.step = read_pod<int64_t>(is);
  // Materialize the registry (names, shapes, order), then overwrite payloads.
  ck.model = Model::init(config, ck.seed);
  const auto n_tensors = read_pod<uint32_t>(is);
  if (n_tensors != ck.model.params.size()) {
    throw std::runtime_error("checkpoint: tensor count mismatch in " + path);
  }
  for (uint32_t i = 0; i < n_tensors; ++i) {
    const auto name_len = read_pod<uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto rows = read_pod<uint32_t>(is);
    const auto cols = read_pod<uint32_t>(is);
    const Tensor& t = ck.model.param(name);
    if (t->value.rows() != static_cast<Eigen::Index>(rows) ||
        t->value.cols() != static_cast<Eigen::Index>(cols)) {
      throw std::runtime_error("checkpoint: shape mismatch for tensor '" + name + "'");
    }
    is.read(reinterpret_cast<char*>(t->value.data()),
            static_cast<std::streamsize>(sizeof(double) * t->value.size()));
    if (!is) throw std::runtime_error("checkpoint: truncated payload for '" + name + "'");
  }
  return ck;
}

}  // namespace cft
