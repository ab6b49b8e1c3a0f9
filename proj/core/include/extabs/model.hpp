#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "extabs/oracle.hpp"
#include "extabs/tensor.hpp"
#include "extabs/textproc.hpp"

namespace extabs {

struct ModelConfig {
  int vocab_size = 0;  // includes the reserved ids
  int d_model = 128;
  int n_heads = 4;
  int enc_layers = 2;
  int dec_layers = 2;
  int ffn_dim = 512;
  int max_input_tokens = 1024;
  int max_target_tokens = 128;
  double init_std = 0.02;
  std::uint64_t seed = 0;

  int head_dim() const { return d_model / n_heads; }
  void validate() const;
};

// Token spans of each segment within the flattened document.
struct SegmentBoundaries {
  std::vector<std::pair<int, int>> spans;  // [begin, end) per segment

  static SegmentBoundaries from_document(const SegmentedDocument& doc);
  int count() const { return static_cast<int>(spans.size()); }
  int total_tokens() const { return spans.empty() ? 0 : spans.back().second; }
  // Spans must be non-empty, contiguous, and cover [0, real_len) exactly.
  void validate_partition(int real_len) const;
};

struct EncoderOutput {
  Tensor hidden;  // (n, d_model), n includes padding rows
  SegmentBoundaries boundaries;
  int real_len = 0;
};

struct SegmentScores {
  Tensor scores;                  // (m, 1), each strictly inside (0, 1)
  std::vector<Tensor> attention;  // per segment (1, span_len), rows sum to 1
  std::vector<double> values() const;
};

struct AttentionResult {
  Tensor context;    // (tq, dv)
  Tensor attention;  // (tq, tk)
};

// Single-head scaled dot-product cross-attention. Keys at positions
// >= real_len are excluded before the softmax. The saliency mask is applied
// AFTER the softmax as a plain elementwise multiply and the rows are NOT
// renormalized: a row attending partly outside the mask sums to less than
// one. A mask with no surviving key in [0, real_len) is rejected. Passing
// no mask is the vanilla path; an all-ones mask multiplies by 1.0 and is
// bit-identical to it.
AttentionResult masked_cross_attention(Tape& tape, const Tensor& q, const Tensor& k,
                                       const Tensor& v, const SaliencyMask* mask, int real_len);

class ExtAbsModel {
 public:
  explicit ExtAbsModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  const std::vector<std::pair<std::string, Tensor>>& named_parameters() const { return params_; }
  std::vector<Tensor> parameters() const;
  Tensor parameter(const std::string& name) const;
  std::size_t parameter_count() const;

  // One full encoder pass. ids may carry trailing padding; real_len marks the
  // true document length and boundaries must partition [0, real_len).
  EncoderOutput encode(Tape& tape, const std::vector<int>& ids, int real_len,
                       const SegmentBoundaries& boundaries) const;

  // Attention-pooled segment representations: (m, d_model) plus the
  // per-segment pooling weights.
  std::pair<Tensor, std::vector<Tensor>> span_extract(Tape& tape, const EncoderOutput& enc) const;
  // Per-segment saliency probabilities from pooled representations.
  Tensor classify_segments(Tape& tape, const Tensor& pooled) const;
  SegmentScores score_segments(Tape& tape, const EncoderOutput& enc) const;

  // Teacher-forcing decoder pass: logits (|prefix|, vocab) for the next
  // token at every prefix position. prefix must start with <bos>. mask may
  // be null (vanilla cross-attention). cross_attention, when given, collects
  // the post-mask attention matrix of every decoder layer and head.
  Tensor decoder_logits(Tape& tape, const EncoderOutput& enc, const SaliencyMask* mask,
                        const std::vector<int>& prefix,
                        std::vector<Tensor>* cross_attention = nullptr) const;

  // Next-token distribution after prefix, on a non-recording tape.
  std::vector<double> decode_step(const EncoderOutput& enc, const SaliencyMask* mask,
                                  const std::vector<int>& prefix) const;

  // Instrumentation: every encode() bumps this once.
  std::uint64_t encoder_forward_count() const { return encode_calls_; }
  void reset_encoder_forward_count() { encode_calls_ = 0; }

 private:
  struct AttnParams {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct LayerNormParams {
    Tensor gain, bias;
  };
  struct FfnParams {
    Tensor w1, b1, w2, b2;
  };
  struct EncoderLayer {
    LayerNormParams ln1, ln2;
    AttnParams attn;
    FfnParams ffn;
  };
  struct DecoderLayer {
    LayerNormParams ln1, ln2, ln3;
    AttnParams self_attn, cross_attn;
    FfnParams ffn;
  };

  Tensor new_param(const std::string& name, std::vector<int> shape, double std_dev,
                   std::mt19937_64& rng);
  AttnParams new_attn(const std::string& prefix, std::mt19937_64& rng);
  LayerNormParams new_ln(const std::string& prefix, std::mt19937_64& rng);
  FfnParams new_ffn(const std::string& prefix, std::mt19937_64& rng);

  Tensor attention_block(Tape& tape, const AttnParams& p, const Tensor& q_in, const Tensor& kv_in,
                         const Tensor* key_mask, bool causal, const Tensor* saliency,
                         std::vector<Tensor>* attn_sink = nullptr) const;
  Tensor ffn_block(Tape& tape, const FfnParams& p, const Tensor& x) const;
  Tensor saliency_vector(const SaliencyMask& mask, int n, int real_len) const;

  ModelConfig config_;
  std::vector<std::pair<std::string, Tensor>> params_;

  Tensor tok_emb_, enc_pos_, dec_pos_;
  std::vector<EncoderLayer> enc_layers_;
  std::vector<DecoderLayer> dec_layers_;
  LayerNormParams enc_final_ln_, dec_final_ln_;
  Tensor span_w1_, span_b1_, span_w2_, span_b2_;
  Tensor cls_w_, cls_b_;
  Tensor out_w_, out_b_;

  mutable std::uint64_t encode_calls_ = 0;
};

}  // namespace extabs
