#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "extabs/model.hpp"
#include "extabs/oracle.hpp"
#include "extabs/rouge.hpp"
#include "extabs/tensor.hpp"
#include "extabs/textproc.hpp"

namespace extabs {

enum class AbsReduction { mean, sum };
AbsReduction parse_abs_reduction(const std::string& text);
std::string to_string(AbsReduction r);

struct TrainConfig {
  double alpha = 10.0;  // extraction loss weight
  double beta = 1.0;    // abstraction loss weight
  double gamma = 0.0;   // divergence loss weight; 0 skips the unmasked pass
  double learning_rate = 3e-4;
  int batch_size = 8;
  int epochs = 10;
  int top_k = 2;  // extractive summary width
  int top_z = 3;  // predicted-mask width
  int max_oracle_selections = 8;
  int beam_size = 4;
  double length_penalty = 1.0;
  std::uint64_t seed = 7;
  OracleStrategy oracle_strategy = OracleStrategy::best_improve;
  RougeObjective objective{};
  AbsReduction abs_reduction = AbsReduction::mean;

  void validate() const;
};

// Mean binary cross-entropy over segment scores; probabilities are clamped
// to [1e-7, 1 - 1e-7] inside the logs.
Tensor extraction_loss(Tape& tape, const Tensor& scores, const std::vector<int>& labels);

// Teacher-forced negative log likelihood of the target tokens (the <eos>
// included) given decoder logits.
Tensor abstraction_loss(Tape& tape, const Tensor& logits, const std::vector<int>& targets,
                        AbsReduction reduction);

// KL(masked || plain) between the two decoder distributions, summed over
// vocabulary, reduced over positions. Probabilities are clamped at 1e-12
// inside the logs; gradients flow through both inputs.
Tensor divergence_loss(Tape& tape, const Tensor& masked_probs, const Tensor& plain_probs,
                       AbsReduction reduction);

struct LossBreakdown {
  double ext = 0.0;
  double abs = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

struct TotalLoss {
  Tensor value;
  LossBreakdown parts;
};

// total = alpha * ext + beta * abs + gamma * kl; kl may be null when the
// divergence term is disabled.
TotalLoss combine_losses(Tape& tape, const Tensor& ext, const Tensor& abs, const Tensor* kl,
                         const TrainConfig& config);

class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Tensor> params, double learning_rate, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);
  void step();
  void zero_grad();
  long long steps_taken() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  double loss_ext = 0.0;
  double loss_abs = 0.0;
  double loss_kl = 0.0;
  double loss_total = 0.0;
  double val_rouge1 = 0.0;
  double val_rouge2 = 0.0;
  double val_rougeL = 0.0;
};

// Index of the epoch with the best validation ROUGE-L; ties go to the
// earliest epoch.
int select_checkpoint(const std::vector<EpochRecord>& history);

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  std::vector<std::uint8_t> best_checkpoint;  // serialized at the best epoch
  std::uint64_t docs_processed = 0;
  std::uint64_t oracle_masks_used = 0;     // gradient steps, always == docs_processed
  std::uint64_t predicted_masks_used = 0;  // gradient steps, always == 0
};

struct TrainCallbacks {
  std::function<void(const EpochRecord&)> on_epoch;
};

// Trains on (train_docs, annotations): each gradient step uses the oracle
// saliency mask. Per-epoch validation greedy-decodes val_docs with a
// predicted top-z mask. The returned checkpoint embeds run_config_json.
TrainResult train_loop(ExtAbsModel& model, const std::vector<SegmentedDocument>& train_docs,
                       const std::vector<OracleAnnotation>& annotations,
                       const std::vector<SegmentedDocument>& val_docs, const Vocabulary& vocab,
                       const TrainConfig& config, const std::string& run_config_json,
                       const TrainCallbacks& callbacks = {});

}  // namespace extabs
