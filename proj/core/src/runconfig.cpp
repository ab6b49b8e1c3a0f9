#include "extabs/runconfig.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "extabs/errors.hpp"

namespace extabs {

namespace {

using json = nlohmann::json;

// name, member, kind. One row per setting keeps set/get/to_json in sync.
#define EXTABS_RUN_CONFIG_FIELDS(X)          \
  X(d_model, int_kind)                       \
  X(n_heads, int_kind)                       \
  X(enc_layers, int_kind)                    \
  X(dec_layers, int_kind)                    \
  X(ffn_dim, int_kind)                       \
  X(max_input_tokens, int_kind)              \
  X(max_target_tokens, int_kind)             \
  X(init_std, double_kind)                   \
  X(vocab_min_freq, int_kind)                \
  X(vocab_max_size, int_kind)                \
  X(alpha, double_kind)                      \
  X(beta, double_kind)                       \
  X(gamma, double_kind)                      \
  X(learning_rate, double_kind)              \
  X(batch_size, int_kind)                    \
  X(epochs, int_kind)                        \
  X(seed, u64_kind)                          \
  X(abs_reduction, string_kind)              \
  X(oracle_strategy, string_kind)            \
  X(objective, string_kind)                  \
  X(max_oracle_selections, int_kind)         \
  X(top_k, int_kind)                         \
  X(top_z, int_kind)                         \
  X(beam_size, int_kind)                     \
  X(length_penalty, double_kind)             \
  X(min_tokens, int_kind)                    \
  X(block_repeat_ngram, int_kind)            \
  X(mask_source, string_kind)                \
  X(synth_docs, int_kind)                    \
  X(synth_segments, int_kind)                \
  X(synth_salient, int_kind)                 \
  X(synth_vocab_tokens, int_kind)            \
  X(synth_min_segment_tokens, int_kind)      \
  X(synth_max_segment_tokens, int_kind)      \
  X(synth_mark_salient, bool_kind)           \
  X(corpus, string_kind)                     \
  X(val, string_kind)                        \
  X(annotations, string_kind)                \
  X(ckpt, string_kind)                       \
  X(out, string_kind)

int parse_int_kind(const std::string& key, const std::string& value) {
  int out = 0;
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) {
    throw UsageError("setting '" + key + "': expected an integer, got '" + value + "'");
  }
  return out;
}

std::uint64_t parse_u64_kind(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) {
    throw UsageError("setting '" + key + "': expected a non-negative integer, got '" + value +
                     "'");
  }
  return out;
}

double parse_double_kind(const std::string& key, const std::string& value) {
  errno = 0;
  char* end = nullptr;
  const double out = std::strtod(value.c_str(), &end);
  if (value.empty() || end != value.c_str() + value.size() || errno == ERANGE ||
      !std::isfinite(out)) {
    throw UsageError("setting '" + key + "': expected a finite number, got '" + value + "'");
  }
  return out;
}

bool parse_bool_kind(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw UsageError("setting '" + key + "': expected true or false, got '" + value + "'");
}

std::string parse_string_kind(const std::string&, const std::string& value) { return value; }

// Textual forms; doubles go through the json writer for the shortest exact
// round trip.
std::string show(int v) { return std::to_string(v); }
std::string show(std::uint64_t v) { return std::to_string(v); }
std::string show(double v) { return json(v).dump(); }
std::string show(bool v) { return v ? "true" : "false"; }
std::string show(const std::string& v) { return v; }

std::string trim(const std::string& text) {
  const auto a = text.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = text.find_last_not_of(" \t\r");
  return text.substr(a, b - a + 1);
}

}  // namespace

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = {
#define EXTABS_NAME(name, kind) #name,
      EXTABS_RUN_CONFIG_FIELDS(EXTABS_NAME)
#undef EXTABS_NAME
  };
  return names;
}

void RunConfig::set(const std::string& key, const std::string& value) {
#define EXTABS_SET(name, kind)          \
  if (key == #name) {                   \
    name = parse_##kind(key, value);    \
    return;                             \
  }
  EXTABS_RUN_CONFIG_FIELDS(EXTABS_SET)
#undef EXTABS_SET
  throw UsageError("unknown configuration key '" + key + "'");
}

std::string RunConfig::get(const std::string& key) const {
#define EXTABS_GET(name, kind) \
  if (key == #name) return show(name);
  EXTABS_RUN_CONFIG_FIELDS(EXTABS_GET)
#undef EXTABS_GET
  throw UsageError("unknown configuration key '" + key + "'");
}

std::string RunConfig::to_json() const {
  json j;
#define EXTABS_JSON(name, kind) j[#name] = name;
  EXTABS_RUN_CONFIG_FIELDS(EXTABS_JSON)
#undef EXTABS_JSON
  return j.dump();
}

std::string RunConfig::to_config_text() const {
  json j = json::parse(to_json());  // object keys iterate sorted
  std::string out;
  for (const auto& [key, value] : j.items()) {
    out += key;
    out += " = ";
    out += get(key);
    out += '\n';
  }
  return out;
}

void RunConfig::validate() const {
  try {
    model_config(Vocabulary::reserved + 1).validate();
    train_config().validate();
    infer_params().validate();
    synth_config().validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (vocab_min_freq < 1) throw UsageError("vocab_min_freq must be >= 1");
  if (vocab_max_size < 1) throw UsageError("vocab_max_size must be >= 1");
  parse_mask_source(mask_source);
}

ModelConfig RunConfig::model_config(int vocab_size) const {
  ModelConfig mc;
  mc.vocab_size = vocab_size;
  mc.d_model = d_model;
  mc.n_heads = n_heads;
  mc.enc_layers = enc_layers;
  mc.dec_layers = dec_layers;
  mc.ffn_dim = ffn_dim;
  mc.max_input_tokens = max_input_tokens;
  mc.max_target_tokens = max_target_tokens;
  mc.init_std = init_std;
  mc.seed = seed;
  return mc;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig tc;
  tc.alpha = alpha;
  tc.beta = beta;
  tc.gamma = gamma;
  tc.learning_rate = learning_rate;
  tc.batch_size = batch_size;
  tc.epochs = epochs;
  tc.top_k = top_k;
  tc.top_z = top_z;
  tc.max_oracle_selections = max_oracle_selections;
  tc.beam_size = beam_size;
  tc.length_penalty = length_penalty;
  tc.seed = seed;
  tc.oracle_strategy = parse_oracle_strategy(oracle_strategy);
  tc.objective = RougeObjective::parse(objective);
  tc.abs_reduction = parse_abs_reduction(abs_reduction);
  return tc;
}

InferParams RunConfig::infer_params() const {
  InferParams p;
  p.top_k = top_k;
  p.top_z = top_z;
  p.max_oracle_selections = max_oracle_selections;
  p.beam.beam_size = beam_size;
  p.beam.length_penalty = length_penalty;
  p.beam.max_tokens = max_target_tokens;
  p.beam.min_tokens = min_tokens;
  p.beam.block_repeat_ngram = block_repeat_ngram;
  return p;
}

SynthConfig RunConfig::synth_config() const {
  SynthConfig sc;
  sc.docs = synth_docs;
  sc.segments = synth_segments;
  sc.salient = synth_salient;
  sc.vocab_tokens = synth_vocab_tokens;
  sc.min_segment_tokens = synth_min_segment_tokens;
  sc.max_segment_tokens = synth_max_segment_tokens;
  sc.mark_salient = synth_mark_salient;
  sc.seed = seed;
  return sc;
}

GreedyOptions RunConfig::greedy_options() const {
  GreedyOptions go;
  go.budget = max_oracle_selections;
  go.objective = RougeObjective::parse(objective);
  go.strategy = parse_oracle_strategy(oracle_strategy);
  return go;
}

CorpusLimits RunConfig::corpus_limits() const {
  CorpusLimits limits;
  limits.max_input_tokens = max_input_tokens;
  limits.max_target_tokens = max_target_tokens;
  return limits;
}

RunConfig load_run_config(const std::string& path,
                          const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig cfg;
  if (!path.empty()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw UsageError(path + ":" + std::to_string(lineno) + ": expected key = value");
      }
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty()) {
        throw UsageError(path + ":" + std::to_string(lineno) + ": empty key");
      }
      try {
        cfg.set(key, value);
      } catch (const UsageError& e) {
        throw UsageError(path + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
  }
  for (const auto& [key, value] : overrides) cfg.set(key, value);
  cfg.validate();
  return cfg;
}

}  // namespace extabs
