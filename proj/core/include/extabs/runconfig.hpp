#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "extabs/infer.hpp"
#include "extabs/model.hpp"
#include "extabs/oracle.hpp"
#include "extabs/textproc.hpp"
#include "extabs/train.hpp"

namespace extabs {

// Every setting the pipeline stages consume, with the defaults the rest of
// the library uses. Values resolve in increasing precedence: defaults, then
// a flat key=value file, then command-line overrides. The resolved form is
// echoed into every artifact the stages write.
struct RunConfig {
  // model dimensions
  int d_model = 128;
  int n_heads = 4;
  int enc_layers = 2;
  int dec_layers = 2;
  int ffn_dim = 512;
  int max_input_tokens = 1024;
  int max_target_tokens = 128;
  double init_std = 0.02;

  // vocabulary construction
  int vocab_min_freq = 1;
  int vocab_max_size = 32768;

  // training
  double alpha = 10.0;
  double beta = 1.0;
  double gamma = 0.0;
  double learning_rate = 3e-4;
  int batch_size = 8;
  int epochs = 10;
  std::uint64_t seed = 7;
  std::string abs_reduction = "mean";
  std::string oracle_strategy = "best-improve";
  std::string objective = "r1+r2";
  int max_oracle_selections = 8;

  // decoding
  int top_k = 2;
  int top_z = 3;
  int beam_size = 4;
  double length_penalty = 1.0;
  int min_tokens = 0;
  int block_repeat_ngram = 0;
  std::string mask_source = "top-z";

  // synthetic corpus generation
  int synth_docs = 500;
  int synth_segments = 10;
  int synth_salient = 2;
  int synth_vocab_tokens = 50;
  int synth_min_segment_tokens = 4;
  int synth_max_segment_tokens = 8;
  bool synth_mark_salient = true;

  // stage paths
  std::string corpus;
  std::string val;
  std::string annotations;
  std::string ckpt;
  std::string out;

  // Key list in declaration order.
  static const std::vector<std::string>& keys();

  // Assigns one setting from its textual form. Unknown keys and values that
  // do not parse as the field's type are usage errors naming the key.
  void set(const std::string& key, const std::string& value);
  // Textual form of one setting (inverse of set).
  std::string get(const std::string& key) const;

  // Resolved settings as a JSON object with sorted keys; embedded in every
  // artifact for provenance.
  std::string to_json() const;
  // The same settings as a reloadable key = value file.
  std::string to_config_text() const;

  // Range and enum checks across all settings; throws UsageError.
  void validate() const;

  // Views for the owning modules.
  ModelConfig model_config(int vocab_size) const;
  TrainConfig train_config() const;
  InferParams infer_params() const;  // beam capped at max_target_tokens
  SynthConfig synth_config() const;
  GreedyOptions greedy_options() const;
  CorpusLimits corpus_limits() const;
};

// Defaults, then the file at `path` (empty path: skipped), then `overrides`
// in order; validates the result. File syntax: one key = value per line,
// '#' starts a comment, blank lines are ignored.
RunConfig load_run_config(const std::string& path,
                          const std::vector<std::pair<std::string, std::string>>& overrides = {});

}  // namespace extabs
