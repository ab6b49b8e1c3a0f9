#include "extabs/train.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "extabs/checkpoint.hpp"
#include "extabs/errors.hpp"
#include "extabs/infer.hpp"

namespace extabs {

namespace {

constexpr double kScoreEps = 1e-7;
constexpr double kProbEps = 1e-12;

struct PreparedDoc {
  std::vector<int> ids;         // flattened document tokens
  SegmentBoundaries boundaries;
  std::vector<int> labels;      // per segment
  SaliencyMask oracle_mask;
  std::vector<int> prefix;      // <bos> + summary ids
  std::vector<int> targets;     // summary ids + <eos>
};

}  // namespace

AbsReduction parse_abs_reduction(const std::string& text) {
  if (text == "mean") return AbsReduction::mean;
  if (text == "sum") return AbsReduction::sum;
  throw UsageError("unknown abs reduction '" + text + "' (expected mean or sum)");
}

std::string to_string(AbsReduction r) { return r == AbsReduction::mean ? "mean" : "sum"; }

void TrainConfig::validate() const {
  if (alpha < 0.0 || beta < 0.0 || gamma < 0.0) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
  if (alpha + beta <= 0.0) {
    throw std::invalid_argument("alpha + beta must be positive, got alpha=" +
                                std::to_string(alpha) + " beta=" + std::to_string(beta));
  }
  if (learning_rate <= 0.0) throw std::invalid_argument("learning_rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (top_k < 1) throw std::invalid_argument("top_k must be >= 1");
  if (top_z < 1) throw std::invalid_argument("top_z must be >= 1");
  if (max_oracle_selections < 1) {
    throw std::invalid_argument("max_oracle_selections must be >= 1");
  }
  if (beam_size < 1) throw std::invalid_argument("beam_size must be >= 1");
  if (length_penalty < 0.0) throw std::invalid_argument("length_penalty must be >= 0");
}

Tensor extraction_loss(Tape& tape, const Tensor& scores, const std::vector<int>& labels) {
  const int m = scores.rows();
  if (scores.ndim() != 2 || scores.cols() != 1 || static_cast<int>(labels.size()) != m) {
    throw std::invalid_argument("extraction_loss: " + std::to_string(labels.size()) +
                                " labels for scores " + shape_str(scores));
  }
  std::vector<double> pos(m), neg(m);
  for (int i = 0; i < m; ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw std::invalid_argument("extraction_loss: labels must be 0/1");
    }
    pos[i] = static_cast<double>(labels[i]);
    neg[i] = 1.0 - pos[i];
  }
  Tensor y = Tensor::from({m, 1}, std::move(pos));
  Tensor y_inv = Tensor::from({m, 1}, std::move(neg));
  Tensor one = Tensor::full({m, 1}, 1.0);
  // y*log(p) + (1-y)*log(1-p), both logs floored at the clamp
  Tensor log_p = log(tape, scores, kScoreEps);
  Tensor log_q = log(tape, add(tape, one, scale(tape, scores, -1.0)), kScoreEps);
  Tensor per = add(tape, mul(tape, y, log_p), mul(tape, y_inv, log_q));
  return scale(tape, sum(tape, per), -1.0 / m);
}

Tensor abstraction_loss(Tape& tape, const Tensor& logits, const std::vector<int>& targets,
                        AbsReduction reduction) {
  if (logits.rows() != static_cast<int>(targets.size())) {
    throw std::invalid_argument("abstraction_loss: " + std::to_string(targets.size()) +
                                " targets for logits " + shape_str(logits));
  }
  Tensor nll = cross_entropy_from_logits(tape, logits, targets);
  if (reduction == AbsReduction::mean) {
    nll = scale(tape, nll, 1.0 / static_cast<double>(targets.size()));
  }
  return nll;
}

Tensor divergence_loss(Tape& tape, const Tensor& masked_probs, const Tensor& plain_probs,
                       AbsReduction reduction) {
  if (masked_probs.shape != plain_probs.shape || masked_probs.ndim() != 2) {
    throw std::invalid_argument("divergence_loss: mismatched distributions " +
                                shape_str(masked_probs) + " vs " + shape_str(plain_probs));
  }
  Tensor log_m = log(tape, masked_probs, kProbEps);
  Tensor log_p = log(tape, plain_probs, kProbEps);
  Tensor diff = add(tape, log_m, scale(tape, log_p, -1.0));
  Tensor kl = sum(tape, mul(tape, masked_probs, diff));
  if (reduction == AbsReduction::mean) {
    kl = scale(tape, kl, 1.0 / static_cast<double>(masked_probs.rows()));
  }
  return kl;
}

TotalLoss combine_losses(Tape& tape, const Tensor& ext, const Tensor& abs, const Tensor* kl,
                         const TrainConfig& config) {
  Tensor total = add(tape, scale(tape, ext, config.alpha), scale(tape, abs, config.beta));
  if (kl != nullptr) total = add(tape, total, scale(tape, *kl, config.gamma));
  TotalLoss out;
  out.value = total;
  out.parts.ext = ext.value();
  out.parts.abs = abs.value();
  out.parts.kl = kl != nullptr ? kl->value() : 0.0;
  out.parts.total = total.value();
  return out;
}

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params, double learning_rate, double beta1,
                             double beta2, double eps)
    : params_(std::move(params)), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (lr_ <= 0.0) throw std::invalid_argument("adam: learning rate must be positive");
  for (const Tensor& p : params_) {
    if (!p.requires_grad || !p.grad) throw std::invalid_argument("adam: param without grad");
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void AdamOptimizer::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    std::vector<double>& data = *params_[p].data;
    const std::vector<double>& grad = *params_[p].grad;
    std::vector<double>& m = m_[p];
    std::vector<double>& v = v_[p];
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grad[i];
      if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient");
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      data[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
    }
  }
}

void AdamOptimizer::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

int select_checkpoint(const std::vector<EpochRecord>& history) {
  if (history.empty()) throw std::invalid_argument("select_checkpoint: empty history");
  int best = 0;
  for (int i = 1; i < static_cast<int>(history.size()); ++i) {
    if (history[i].val_rougeL > history[best].val_rougeL) best = i;
  }
  return best;
}

TrainResult train_loop(ExtAbsModel& model, const std::vector<SegmentedDocument>& train_docs,
                       const std::vector<OracleAnnotation>& annotations,
                       const std::vector<SegmentedDocument>& val_docs, const Vocabulary& vocab,
                       const TrainConfig& config, const std::string& run_config_json,
                       const TrainCallbacks& callbacks) {
  config.validate();
  if (train_docs.empty()) throw std::invalid_argument("train_loop: no training documents");
  if (annotations.size() != train_docs.size()) {
    throw std::invalid_argument("train_loop: " + std::to_string(annotations.size()) +
                                " annotations for " + std::to_string(train_docs.size()) +
                                " documents");
  }
  const ModelConfig& mc = model.config();

  std::vector<PreparedDoc> prepared;
  prepared.reserve(train_docs.size());
  for (std::size_t i = 0; i < train_docs.size(); ++i) {
    const SegmentedDocument& doc = train_docs[i];
    if (doc.total_tokens() > mc.max_input_tokens) {
      throw DataError("record '" + doc.id + "': " + std::to_string(doc.total_tokens()) +
                      " tokens exceed the model input limit");
    }
    if (static_cast<int>(doc.summary.size()) > mc.max_target_tokens) {
      throw DataError("record '" + doc.id + "': summary exceeds the model target limit");
    }
    PreparedDoc p;
    p.ids = vocab.encode(doc.flat_tokens());
    p.boundaries = SegmentBoundaries::from_document(doc);
    p.labels = annotations[i].labels;
    if (p.labels.size() != doc.segments.size()) {
      throw DataError("record '" + doc.id + "': annotation has " +
                      std::to_string(p.labels.size()) + " labels for " +
                      std::to_string(doc.segments.size()) + " segments");
    }
    p.oracle_mask = make_oracle_mask(doc, annotations[i], config.max_oracle_selections);
    const std::vector<int> summary_ids = vocab.encode(doc.summary);
    p.prefix.push_back(Vocabulary::bos_id);
    p.prefix.insert(p.prefix.end(), summary_ids.begin(), summary_ids.end());
    p.targets = summary_ids;
    p.targets.push_back(Vocabulary::eos_id);
    prepared.push_back(std::move(p));
  }

  AdamOptimizer optimizer(model.parameters(), config.learning_rate);
  optimizer.zero_grad();

  TrainResult result;
  double best_rougeL = -1.0;

  InferParams val_params;
  val_params.top_k = config.top_k;
  val_params.top_z = config.top_z;
  val_params.max_oracle_selections = config.max_oracle_selections;
  val_params.beam.beam_size = 1;  // greedy validation decoding
  val_params.beam.length_penalty = config.length_penalty;
  val_params.beam.max_tokens = mc.max_target_tokens;

  std::vector<std::size_t> order(prepared.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Deterministic per-epoch shuffle derived from the run seed.
    std::mt19937_64 shuffle_rng(config.seed + 0x9e3779b97f4a7c15ULL * (epoch + 1));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng() % i]);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const double batch_n = static_cast<double>(stop - start);
      for (std::size_t b = start; b < stop; ++b) {
        const PreparedDoc& p = prepared[order[b]];
        const std::uint64_t encodes_before = model.encoder_forward_count();

        Tape tape(true);
        EncoderOutput enc =
            model.encode(tape, p.ids, static_cast<int>(p.ids.size()), p.boundaries);
        SegmentScores seg = model.score_segments(tape, enc);
        Tensor ext = extraction_loss(tape, seg.scores, p.labels);
        Tensor masked_logits = model.decoder_logits(tape, enc, &p.oracle_mask, p.prefix);
        Tensor abs = abstraction_loss(tape, masked_logits, p.targets, config.abs_reduction);

        Tensor kl;
        const Tensor* kl_ptr = nullptr;
        if (config.gamma > 0.0) {
          Tensor plain_logits = model.decoder_logits(tape, enc, nullptr, p.prefix);
          Tensor masked_probs = softmax_rows(tape, masked_logits);
          Tensor plain_probs = softmax_rows(tape, plain_logits);
          kl = divergence_loss(tape, masked_probs, plain_probs, config.abs_reduction);
          kl_ptr = &kl;
        }

        TotalLoss loss = combine_losses(tape, ext, abs, kl_ptr, config);
        if (!std::isfinite(loss.parts.total)) {
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " doc '" +
                             train_docs[order[b]].id + "' (ext=" + std::to_string(loss.parts.ext) +
                             " abs=" + std::to_string(loss.parts.abs) +
                             " kl=" + std::to_string(loss.parts.kl) + ")");
        }
        tape.backprop(loss.value, 1.0 / batch_n);

        if (model.encoder_forward_count() != encodes_before + 1) {
          throw std::logic_error("train step ran more than one encoder forward");
        }
        rec.loss_ext += loss.parts.ext;
        rec.loss_abs += loss.parts.abs;
        rec.loss_kl += loss.parts.kl;
        rec.loss_total += loss.parts.total;
        ++result.docs_processed;
        ++result.oracle_masks_used;
      }
      optimizer.step();
      optimizer.zero_grad();
    }
    const double n = static_cast<double>(prepared.size());
    rec.loss_ext /= n;
    rec.loss_abs /= n;
    rec.loss_kl /= n;
    rec.loss_total /= n;

    double r1 = 0.0, r2 = 0.0, rl = 0.0;
    for (const SegmentedDocument& doc : val_docs) {
      SummaryResult s =
          summarize_document(model, vocab, doc, MaskSource::top_z, nullptr, val_params);
      RougeScore score = rouge_all(s.abstractive, doc.summary);
      r1 += score.rouge1;
      r2 += score.rouge2;
      rl += score.rougeL;
    }
    if (!val_docs.empty()) {
      rec.val_rouge1 = r1 / static_cast<double>(val_docs.size());
      rec.val_rouge2 = r2 / static_cast<double>(val_docs.size());
      rec.val_rougeL = rl / static_cast<double>(val_docs.size());
    }
    result.history.push_back(rec);
    if (callbacks.on_epoch) callbacks.on_epoch(rec);

    if (rec.val_rougeL > best_rougeL) {
      best_rougeL = rec.val_rougeL;
      result.best_epoch = epoch;
      result.best_checkpoint = serialize_checkpoint(model, vocab, run_config_json);
    }
  }

  if (result.best_epoch != select_checkpoint(result.history)) {
    throw std::logic_error("checkpoint selection disagrees with history");
  }
  return result;
}

}  // namespace extabs
