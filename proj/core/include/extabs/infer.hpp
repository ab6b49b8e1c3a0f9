#pragma once

#include <functional>
#include <string>
#include <vector>

#include "extabs/model.hpp"
#include "extabs/oracle.hpp"
#include "extabs/textproc.hpp"

namespace extabs {

struct BeamParams {
  int beam_size = 4;
  double length_penalty = 1.0;
  int max_tokens = 128;        // content-token cap
  int min_tokens = 0;          // 0 disables: no <eos> before this many tokens
  int block_repeat_ngram = 0;  // 0 disables: forbid repeating an n-gram

  void validate() const;
};

// Next-token distribution given [<bos>, generated...]. Must return
// vocab_size probabilities.
using StepFn = std::function<std::vector<double>(const std::vector<int>& prefix)>;

struct BeamResult {
  std::vector<int> tokens;  // generated content, <bos>/<eos> stripped
  double score = 0.0;       // logprob / length^penalty
  double logprob = 0.0;     // sum of generated-token log probabilities
  bool finished = false;    // ended with <eos> (false: hit the token cap)
};

// Hypotheses are scored by total logprob divided by length^penalty, where
// length counts generated tokens including <eos> when present. Each depth
// expands every live hypothesis over the full vocabulary and keeps the
// best beam_size candidates overall; candidates ending in <eos> (or at the
// cap) retire to a finished pool. Ties break deterministically: better
// score, then lexicographically smaller token sequence, then earlier
// finish. beam_size = 1 is greedy argmax decoding.
BeamResult beam_search_decode(const StepFn& step, int vocab_size, const BeamParams& params);

// Indices of the k highest-scoring segments (ties to the lower index),
// returned in document order.
std::vector<int> top_k_segments(const std::vector<double>& scores, int k);

// Inference-time saliency mask from the z highest-scoring segments.
SaliencyMask predicted_mask(const SegmentedDocument& doc, const std::vector<double>& scores,
                            int z);

enum class MaskSource { none, oracle, top_z };
MaskSource parse_mask_source(const std::string& text);
std::string to_string(MaskSource source);

struct InferParams {
  int top_k = 2;
  int top_z = 3;
  int max_oracle_selections = 8;  // fallback width for empty oracle selections
  BeamParams beam;

  void validate() const;
};

struct SummaryResult {
  std::vector<int> extract_indices;      // top-k segments, document order
  std::vector<std::string> abstractive;  // decoded tokens
  std::vector<int> mask_segments;        // segments forming the mask ([] for none)
  std::vector<double> scores;            // per-segment saliency
};

// Runs one document end to end: a single encoder pass feeds both the
// extractive ranking and the (optionally masked) abstractive decode.
// `oracle` is required for MaskSource::oracle.
SummaryResult summarize_document(const ExtAbsModel& model, const Vocabulary& vocab,
                                 const SegmentedDocument& doc, MaskSource source,
                                 const OracleAnnotation* oracle, const InferParams& params);

}  // namespace extabs
