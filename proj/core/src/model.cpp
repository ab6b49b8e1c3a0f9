#include "extabs/model.hpp"

#include <algorithm>
#include <cmath>

#include "extabs/errors.hpp"

namespace extabs {

void ModelConfig::validate() const {
  if (vocab_size <= Vocabulary::reserved) {
    throw std::invalid_argument("model: vocab_size must exceed the reserved ids");
  }
  if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0) {
    throw std::invalid_argument("model: d_model must be a positive multiple of n_heads");
  }
  if (enc_layers < 1 || dec_layers < 1) throw std::invalid_argument("model: need >= 1 layer each");
  if (ffn_dim < 1) throw std::invalid_argument("model: ffn_dim must be positive");
  if (max_input_tokens < 1 || max_target_tokens < 1) {
    throw std::invalid_argument("model: token limits must be positive");
  }
  if (!(init_std > 0.0)) throw std::invalid_argument("model: init_std must be positive");
}

SegmentBoundaries SegmentBoundaries::from_document(const SegmentedDocument& doc) {
  SegmentBoundaries b;
  int pos = 0;
  for (const auto& seg : doc.segments) {
    b.spans.emplace_back(pos, pos + static_cast<int>(seg.size()));
    pos += static_cast<int>(seg.size());
  }
  return b;
}

void SegmentBoundaries::validate_partition(int real_len) const {
  if (spans.empty()) throw std::invalid_argument("boundaries: no segments");
  int pos = 0;
  for (const auto& [a, b] : spans) {
    if (a != pos || b <= a) {
      throw std::invalid_argument("boundaries: spans must be contiguous and non-empty");
    }
    pos = b;
  }
  if (pos != real_len) {
    throw std::invalid_argument("boundaries: spans cover " + std::to_string(pos) +
                                " tokens but real length is " + std::to_string(real_len));
  }
}

std::vector<double> SegmentScores::values() const {
  std::vector<double> out(scores.rows());
  for (int i = 0; i < scores.rows(); ++i) out[i] = scores.at(i, 0);
  return out;
}

AttentionResult masked_cross_attention(Tape& tape, const Tensor& q, const Tensor& k,
                                       const Tensor& v, const SaliencyMask* mask, int real_len) {
  if (q.ndim() != 2 || k.ndim() != 2 || v.ndim() != 2 || q.shape[1] != k.shape[1] ||
      k.shape[0] != v.shape[0]) {
    throw std::invalid_argument("masked_cross_attention: bad shapes q" + shape_str(q) + " k" +
                                shape_str(k) + " v" + shape_str(v));
  }
  const int tk = k.shape[0];
  if (real_len < 1 || real_len > tk) {
    throw std::invalid_argument("masked_cross_attention: real_len " + std::to_string(real_len) +
                                " outside [1, " + std::to_string(tk) + "]");
  }
  Tensor scores = scale(tape, matmul(tape, q, transpose(tape, k)),
                        1.0 / std::sqrt(static_cast<double>(q.shape[1])));
  if (real_len < tk) {
    Tensor key_mask = Tensor::zeros({tk});
    for (int j = 0; j < real_len; ++j) (*key_mask.data)[j] = 1.0;
    scores = masked_fill(tape, scores, key_mask, -1e30);
  }
  Tensor attn = softmax_rows(tape, scores);
  if (mask != nullptr) {
    const auto& bits = mask->bits;
    if (static_cast<int>(bits.size()) != real_len && static_cast<int>(bits.size()) != tk) {
      throw std::invalid_argument("masked_cross_attention: mask of " +
                                  std::to_string(bits.size()) + " bits for " +
                                  std::to_string(tk) + " keys (real_len " +
                                  std::to_string(real_len) + ")");
    }
    bool any = false;
    Tensor sal = Tensor::zeros({tk});
    for (int j = 0; j < std::min<int>(static_cast<int>(bits.size()), real_len); ++j) {
      (*sal.data)[j] = bits[j] ? 1.0 : 0.0;
      any = any || bits[j];
    }
    if (!any) throw std::invalid_argument("masked_cross_attention: all-zero saliency mask");
    attn = mul(tape, attn, sal);  // post-softmax, no renormalization
  }
  return {matmul(tape, attn, v), attn};
}

// --- construction ---------------------------------------------------------------

Tensor ExtAbsModel::new_param(const std::string& name, std::vector<int> shape, double std_dev,
                              std::mt19937_64& rng) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  if (std_dev > 0.0) {
    std::normal_distribution<double> dist(0.0, std_dev);
    for (double& v : *t.data) v = dist(rng);
  }
  params_.emplace_back(name, t);
  return t;
}

ExtAbsModel::AttnParams ExtAbsModel::new_attn(const std::string& prefix, std::mt19937_64& rng) {
  const int d = config_.d_model;
  AttnParams p;
  p.wq = new_param(prefix + ".wq", {d, d}, config_.init_std, rng);
  p.bq = new_param(prefix + ".bq", {d}, 0.0, rng);
  p.wk = new_param(prefix + ".wk", {d, d}, config_.init_std, rng);
  p.bk = new_param(prefix + ".bk", {d}, 0.0, rng);
  p.wv = new_param(prefix + ".wv", {d, d}, config_.init_std, rng);
  p.bv = new_param(prefix + ".bv", {d}, 0.0, rng);
  p.wo = new_param(prefix + ".wo", {d, d}, config_.init_std, rng);
  p.bo = new_param(prefix + ".bo", {d}, 0.0, rng);
  return p;
}

ExtAbsModel::LayerNormParams ExtAbsModel::new_ln(const std::string& prefix,
                                                 std::mt19937_64& rng) {
  LayerNormParams p;
  p.gain = new_param(prefix + ".gain", {config_.d_model}, 0.0, rng);
  std::fill(p.gain.data->begin(), p.gain.data->end(), 1.0);
  p.bias = new_param(prefix + ".bias", {config_.d_model}, 0.0, rng);
  return p;
}

ExtAbsModel::FfnParams ExtAbsModel::new_ffn(const std::string& prefix, std::mt19937_64& rng) {
  const int d = config_.d_model, f = config_.ffn_dim;
  FfnParams p;
  p.w1 = new_param(prefix + ".w1", {d, f}, config_.init_std, rng);
  p.b1 = new_param(prefix + ".b1", {f}, 0.0, rng);
  p.w2 = new_param(prefix + ".w2", {f, d}, config_.init_std, rng);
  p.b2 = new_param(prefix + ".b2", {d}, 0.0, rng);
  return p;
}

ExtAbsModel::ExtAbsModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  const int d = config_.d_model;

  tok_emb_ = new_param("tok_emb", {config_.vocab_size, d}, config_.init_std, rng);
  enc_pos_ = new_param("enc_pos", {config_.max_input_tokens, d}, config_.init_std, rng);
  dec_pos_ = new_param("dec_pos", {config_.max_target_tokens + 1, d}, config_.init_std, rng);

  for (int i = 0; i < config_.enc_layers; ++i) {
    const std::string p = "enc." + std::to_string(i);
    EncoderLayer layer;
    layer.ln1 = new_ln(p + ".ln1", rng);
    layer.attn = new_attn(p + ".attn", rng);
    layer.ln2 = new_ln(p + ".ln2", rng);
    layer.ffn = new_ffn(p + ".ffn", rng);
    enc_layers_.push_back(std::move(layer));
  }
  enc_final_ln_ = new_ln("enc.final_ln", rng);

  for (int i = 0; i < config_.dec_layers; ++i) {
    const std::string p = "dec." + std::to_string(i);
    DecoderLayer layer;
    layer.ln1 = new_ln(p + ".ln1", rng);
    layer.self_attn = new_attn(p + ".self", rng);
    layer.ln2 = new_ln(p + ".ln2", rng);
    layer.cross_attn = new_attn(p + ".cross", rng);
    layer.ln3 = new_ln(p + ".ln3", rng);
    layer.ffn = new_ffn(p + ".ffn", rng);
    dec_layers_.push_back(std::move(layer));
  }
  dec_final_ln_ = new_ln("dec.final_ln", rng);

  span_w1_ = new_param("span.w1", {d, d}, config_.init_std, rng);
  span_b1_ = new_param("span.b1", {d}, 0.0, rng);
  span_w2_ = new_param("span.w2", {d, 1}, config_.init_std, rng);
  span_b2_ = new_param("span.b2", {1}, 0.0, rng);
  cls_w_ = new_param("cls.w", {d, 1}, config_.init_std, rng);
  cls_b_ = new_param("cls.b", {1}, 0.0, rng);
  out_w_ = new_param("out.w", {d, config_.vocab_size}, config_.init_std, rng);
  out_b_ = new_param("out.b", {config_.vocab_size}, 0.0, rng);
}

std::vector<Tensor> ExtAbsModel::parameters() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& [name, t] : params_) out.push_back(t);
  return out;
}

Tensor ExtAbsModel::parameter(const std::string& name) const {
  for (const auto& [n, t] : params_) {
    if (n == name) return t;
  }
  throw std::invalid_argument("no parameter named '" + name + "'");
}

std::size_t ExtAbsModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

// --- forward blocks ---------------------------------------------------------------

Tensor ExtAbsModel::attention_block(Tape& tape, const AttnParams& p, const Tensor& q_in,
                                    const Tensor& kv_in, const Tensor* key_mask, bool causal,
                                    const Tensor* saliency,
                                    std::vector<Tensor>* attn_sink) const {
  const int heads = config_.n_heads, dk = config_.head_dim();
  const int tq = q_in.shape[0], tk = kv_in.shape[0];
  Tensor q = add(tape, matmul(tape, q_in, p.wq), p.bq);
  Tensor k = add(tape, matmul(tape, kv_in, p.wk), p.bk);
  Tensor v = add(tape, matmul(tape, kv_in, p.wv), p.bv);

  Tensor causal_mask;
  if (causal) {
    causal_mask = Tensor::zeros({tq, tk});
    for (int i = 0; i < tq; ++i)
      for (int j = 0; j <= i && j < tk; ++j) causal_mask.at(i, j) = 1.0;
  }

  std::vector<Tensor> contexts;
  contexts.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(tape, q, h * dk, (h + 1) * dk);
    Tensor kh = slice_cols(tape, k, h * dk, (h + 1) * dk);
    Tensor vh = slice_cols(tape, v, h * dk, (h + 1) * dk);
    Tensor scores = scale(tape, matmul(tape, qh, transpose(tape, kh)),
                          1.0 / std::sqrt(static_cast<double>(dk)));
    if (key_mask != nullptr) scores = masked_fill(tape, scores, *key_mask, -1e30);
    if (causal) scores = masked_fill(tape, scores, causal_mask, -1e30);
    Tensor attn = softmax_rows(tape, scores);
    if (saliency != nullptr) attn = mul(tape, attn, *saliency);
    if (attn_sink != nullptr) attn_sink->push_back(attn);
    contexts.push_back(matmul(tape, attn, vh));
  }
  Tensor ctx = heads == 1 ? contexts[0] : concat_cols(tape, contexts);
  return add(tape, matmul(tape, ctx, p.wo), p.bo);
}

Tensor ExtAbsModel::ffn_block(Tape& tape, const FfnParams& p, const Tensor& x) const {
  Tensor h = gelu(tape, add(tape, matmul(tape, x, p.w1), p.b1));
  return add(tape, matmul(tape, h, p.w2), p.b2);
}

Tensor ExtAbsModel::saliency_vector(const SaliencyMask& mask, int n, int real_len) const {
  const auto& bits = mask.bits;
  if (static_cast<int>(bits.size()) != real_len && static_cast<int>(bits.size()) != n) {
    throw std::invalid_argument("saliency mask of " + std::to_string(bits.size()) +
                                " bits does not match document length " +
                                std::to_string(real_len));
  }
  Tensor sal = Tensor::zeros({n});
  bool any = false;
  for (int j = 0; j < std::min<int>(static_cast<int>(bits.size()), real_len); ++j) {
    (*sal.data)[j] = bits[j] ? 1.0 : 0.0;
    any = any || bits[j];
  }
  if (!any) throw std::invalid_argument("all-zero saliency mask");
  return sal;
}

EncoderOutput ExtAbsModel::encode(Tape& tape, const std::vector<int>& ids, int real_len,
                                  const SegmentBoundaries& boundaries) const {
  const int n = static_cast<int>(ids.size());
  if (n < 1 || n > config_.max_input_tokens) {
    throw std::invalid_argument("encode: " + std::to_string(n) + " tokens outside [1, " +
                                std::to_string(config_.max_input_tokens) + "]");
  }
  if (real_len < 1 || real_len > n) {
    throw std::invalid_argument("encode: real_len " + std::to_string(real_len) +
                                " outside [1, " + std::to_string(n) + "]");
  }
  boundaries.validate_partition(real_len);

  Tensor key_mask;
  const Tensor* key_mask_ptr = nullptr;
  if (real_len < n) {
    key_mask = Tensor::zeros({n});
    for (int j = 0; j < real_len; ++j) (*key_mask.data)[j] = 1.0;
    key_mask_ptr = &key_mask;
  }

  Tensor x = add(tape, embedding(tape, tok_emb_, ids), slice_rows(tape, enc_pos_, 0, n));
  for (const EncoderLayer& layer : enc_layers_) {
    Tensor normed = layer_norm(tape, x, layer.ln1.gain, layer.ln1.bias);
    x = add(tape, x, attention_block(tape, layer.attn, normed, normed, key_mask_ptr,
                                     /*causal=*/false, nullptr));
    Tensor normed2 = layer_norm(tape, x, layer.ln2.gain, layer.ln2.bias);
    x = add(tape, x, ffn_block(tape, layer.ffn, normed2));
  }
  x = layer_norm(tape, x, enc_final_ln_.gain, enc_final_ln_.bias);

  ++encode_calls_;
  return {x, boundaries, real_len};
}

std::pair<Tensor, std::vector<Tensor>> ExtAbsModel::span_extract(Tape& tape,
                                                                 const EncoderOutput& enc) const {
  std::vector<Tensor> pooled, alphas;
  pooled.reserve(enc.boundaries.count());
  alphas.reserve(enc.boundaries.count());
  for (const auto& [a, b] : enc.boundaries.spans) {
    Tensor seg = slice_rows(tape, enc.hidden, a, b);
    Tensor h = gelu(tape, add(tape, matmul(tape, seg, span_w1_), span_b1_));
    Tensor e = add(tape, matmul(tape, h, span_w2_), span_b2_);  // (len, 1)
    Tensor alpha = softmax_rows(tape, transpose(tape, e));      // (1, len)
    pooled.push_back(matmul(tape, alpha, seg));
    alphas.push_back(std::move(alpha));
  }
  Tensor stacked = pooled.size() == 1 ? pooled[0] : concat_rows(tape, pooled);
  return {stacked, std::move(alphas)};
}

Tensor ExtAbsModel::classify_segments(Tape& tape, const Tensor& pooled) const {
  return sigmoid(tape, add(tape, matmul(tape, pooled, cls_w_), cls_b_));
}

SegmentScores ExtAbsModel::score_segments(Tape& tape, const EncoderOutput& enc) const {
  auto [pooled, alphas] = span_extract(tape, enc);
  SegmentScores s;
  s.scores = classify_segments(tape, pooled);
  s.attention = std::move(alphas);
  return s;
}

Tensor ExtAbsModel::decoder_logits(Tape& tape, const EncoderOutput& enc, const SaliencyMask* mask,
                                   const std::vector<int>& prefix,
                                   std::vector<Tensor>* cross_attention) const {
  const int t = static_cast<int>(prefix.size());
  if (t < 1 || prefix[0] != Vocabulary::bos_id) {
    throw std::invalid_argument("decoder: prefix must start with <bos>");
  }
  if (t > config_.max_target_tokens + 1) {
    throw std::invalid_argument("decoder: prefix of " + std::to_string(t) +
                                " exceeds max-target-tokens " +
                                std::to_string(config_.max_target_tokens));
  }
  const int n = enc.hidden.shape[0];

  Tensor key_mask;
  const Tensor* key_mask_ptr = nullptr;
  if (enc.real_len < n) {
    key_mask = Tensor::zeros({n});
    for (int j = 0; j < enc.real_len; ++j) (*key_mask.data)[j] = 1.0;
    key_mask_ptr = &key_mask;
  }
  Tensor sal;
  const Tensor* sal_ptr = nullptr;
  if (mask != nullptr) {
    sal = saliency_vector(*mask, n, enc.real_len);
    sal_ptr = &sal;
  }

  Tensor x = add(tape, embedding(tape, tok_emb_, prefix), slice_rows(tape, dec_pos_, 0, t));
  for (const DecoderLayer& layer : dec_layers_) {
    Tensor n1 = layer_norm(tape, x, layer.ln1.gain, layer.ln1.bias);
    x = add(tape, x, attention_block(tape, layer.self_attn, n1, n1, nullptr, /*causal=*/true,
                                     nullptr));
    Tensor n2 = layer_norm(tape, x, layer.ln2.gain, layer.ln2.bias);
    x = add(tape, x, attention_block(tape, layer.cross_attn, n2, enc.hidden, key_mask_ptr,
                                     /*causal=*/false, sal_ptr, cross_attention));
    Tensor n3 = layer_norm(tape, x, layer.ln3.gain, layer.ln3.bias);
    x = add(tape, x, ffn_block(tape, layer.ffn, n3));
  }
  x = layer_norm(tape, x, dec_final_ln_.gain, dec_final_ln_.bias);
  return add(tape, matmul(tape, x, out_w_), out_b_);
}

std::vector<double> ExtAbsModel::decode_step(const EncoderOutput& enc, const SaliencyMask* mask,
                                             const std::vector<int>& prefix) const {
  if (static_cast<int>(prefix.size()) > config_.max_target_tokens) {
    throw std::invalid_argument("decode_step: prefix at max-target-tokens, nothing to extend");
  }
  Tape tape(false);
  Tensor logits = decoder_logits(tape, enc, mask, prefix);
  Tensor probs = softmax_rows(tape, logits);
  const int v = config_.vocab_size;
  std::vector<double> out(v);
  for (int j = 0; j < v; ++j) out[j] = probs.at(probs.rows() - 1, j);
  return out;
}

}  // namespace extabs
