#include "extabs/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "extabs/errors.hpp"

namespace extabs {

namespace {

using json = nlohmann::json;

constexpr char kMagic[8] = {'X', 'A', 'B', 'S', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void append_raw(std::vector<std::uint8_t>& out, const T& value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T read_raw(const std::vector<std::uint8_t>& bytes, std::size_t& offset) {
  if (offset + sizeof(T) > bytes.size()) throw DataError("checkpoint: truncated file");
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  offset += sizeof(T);
  return value;
}

json config_to_json(const ModelConfig& c) {
  json j;
  j["vocab_size"] = c.vocab_size;
  j["d_model"] = c.d_model;
  j["n_heads"] = c.n_heads;
  j["enc_layers"] = c.enc_layers;
  j["dec_layers"] = c.dec_layers;
  j["ffn_dim"] = c.ffn_dim;
  j["max_input_tokens"] = c.max_input_tokens;
  j["max_target_tokens"] = c.max_target_tokens;
  j["init_std"] = c.init_std;
  j["seed"] = c.seed;
  return j;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.enc_layers = j.at("enc_layers").get<int>();
  c.dec_layers = j.at("dec_layers").get<int>();
  c.ffn_dim = j.at("ffn_dim").get<int>();
  c.max_input_tokens = j.at("max_input_tokens").get<int>();
  c.max_target_tokens = j.at("max_target_tokens").get<int>();
  c.init_std = j.at("init_std").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const ExtAbsModel& model, const Vocabulary& vocab,
                                               const std::string& run_config_json) {
  if (vocab.size() != model.config().vocab_size) {
    throw std::invalid_argument("checkpoint: vocabulary of " + std::to_string(vocab.size()) +
                                " tokens does not match model vocab_size " +
                                std::to_string(model.config().vocab_size));
  }
  json header;
  header["model"] = config_to_json(model.config());
  header["vocab"] = std::vector<std::string>(vocab.tokens().begin() + Vocabulary::reserved,
                                             vocab.tokens().end());
  if (run_config_json.empty()) {
    header["run_config"] = json::object();
  } else {
    json rc = json::parse(run_config_json, nullptr, false);
    if (rc.is_discarded()) throw std::invalid_argument("checkpoint: run_config is not valid JSON");
    header["run_config"] = std::move(rc);
  }
  json tensors = json::array();
  for (const auto& [name, t] : model.named_parameters()) {
    json entry;
    entry["name"] = name;
    entry["shape"] = t.shape;
    tensors.push_back(std::move(entry));
  }
  header["tensors"] = std::move(tensors);
  const std::string header_text = header.dump();

  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + sizeof(kMagic));
  append_raw(out, kVersion);
  append_raw(out, static_cast<std::uint64_t>(header_text.size()));
  out.insert(out.end(), header_text.begin(), header_text.end());
  for (const auto& [name, t] : model.named_parameters()) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.data->data());
    out.insert(out.end(), p, p + t.numel() * sizeof(double));
  }
  return out;
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to file: " + path);
}

void save_checkpoint(const std::string& path, const ExtAbsModel& model, const Vocabulary& vocab,
                     const std::string& run_config_json) {
  write_bytes(path, serialize_checkpoint(model, vocab, run_config_json));
}

LoadedCheckpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes) {
  std::size_t offset = 0;
  if (bytes.size() < sizeof(kMagic) ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError("checkpoint: bad magic, not a checkpoint file");
  }
  offset = sizeof(kMagic);
  const auto version = read_raw<std::uint32_t>(bytes, offset);
  if (version != kVersion) {
    throw DataError("checkpoint: unsupported format version " + std::to_string(version));
  }
  const auto header_len = read_raw<std::uint64_t>(bytes, offset);
  if (offset + header_len > bytes.size()) throw DataError("checkpoint: truncated header");
  json header = json::parse(bytes.begin() + offset, bytes.begin() + offset + header_len,
                            nullptr, false);
  offset += header_len;
  if (header.is_discarded() || !header.is_object()) {
    throw DataError("checkpoint: malformed header JSON");
  }

  const ModelConfig config = config_from_json(header.at("model"));
  Vocabulary vocab = Vocabulary::from_tokens(header.at("vocab").get<std::vector<std::string>>());
  if (vocab.size() != config.vocab_size) {
    throw DataError("checkpoint: vocabulary does not match model vocab_size");
  }

  ExtAbsModel model(config);
  const json& tensors = header.at("tensors");
  const auto& params = model.named_parameters();
  if (tensors.size() != params.size()) {
    throw DataError("checkpoint: tensor directory has " + std::to_string(tensors.size()) +
                    " entries, model has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, t] = params[i];
    if (tensors[i].at("name").get<std::string>() != name ||
        tensors[i].at("shape").get<std::vector<int>>() != t.shape) {
      throw DataError("checkpoint: tensor directory mismatch at '" + name + "'");
    }
    const std::size_t nbytes = t.numel() * sizeof(double);
    if (offset + nbytes > bytes.size()) throw DataError("checkpoint: truncated payload");
    std::memcpy(t.data->data(), bytes.data() + offset, nbytes);
    offset += nbytes;
  }
  if (offset != bytes.size()) throw DataError("checkpoint: trailing bytes after payload");

  return {std::move(model), std::move(vocab), header.at("run_config").dump()};
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

}  // namespace extabs
