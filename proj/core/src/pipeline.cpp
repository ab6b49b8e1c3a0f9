#include "extabs/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <vector>

#include <nlohmann/json.hpp>

#include "extabs/checkpoint.hpp"
#include "extabs/errors.hpp"
#include "extabs/eval.hpp"
#include "extabs/train.hpp"

namespace extabs {

namespace {

using json = nlohmann::json;

void require_setting(const std::string& value, const char* key, const char* stage) {
  if (value.empty()) {
    throw UsageError(std::string(stage) + ": missing required setting '" + key + "'");
  }
}

std::vector<OracleAnnotation> compute_annotations(const std::vector<SegmentedDocument>& docs,
                                                  const RunConfig& cfg) {
  const GreedyOptions options = cfg.greedy_options();
  std::vector<OracleAnnotation> out;
  out.reserve(docs.size());
  for (const SegmentedDocument& doc : docs) out.push_back(greedy_select(doc, options));
  return out;
}

std::vector<DocumentSummary> build_summaries(const ExtAbsModel& model, const Vocabulary& vocab,
                                             const std::vector<SegmentedDocument>& docs,
                                             const std::vector<OracleAnnotation>* annotations,
                                             MaskSource source, const InferParams& params) {
  std::vector<DocumentSummary> out;
  out.reserve(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const OracleAnnotation* ann = source == MaskSource::oracle ? &(*annotations)[i] : nullptr;
    SummaryResult r = summarize_document(model, vocab, docs[i], source, ann, params);
    DocumentSummary s;
    s.id = docs[i].id;
    s.extractive = extract_segments(docs[i], r.extract_indices);
    s.abstractive = join_tokens(r.abstractive);
    s.mask_segments = r.mask_segments;
    s.scores = r.scores;
    out.push_back(std::move(s));
  }
  return out;
}

// Decodes must fit the checkpoint's geometry regardless of the current
// settings, so stages that load a model re-truncate with its limits.
CorpusLimits model_limits(const ExtAbsModel& model) {
  CorpusLimits limits;
  limits.max_input_tokens = model.config().max_input_tokens;
  limits.max_target_tokens = model.config().max_target_tokens;
  return limits;
}

InferParams capped_infer_params(const RunConfig& cfg, const ExtAbsModel& model) {
  InferParams params = cfg.infer_params();
  params.beam.max_tokens = std::min(params.beam.max_tokens, model.config().max_target_tokens);
  return params;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  out << text;
}

json rouge_json(const RougeScore& s) {
  json j;
  j["rouge1"] = s.rouge1;
  j["rouge2"] = s.rouge2;
  j["rougeL"] = s.rougeL;
  return j;
}

json ttest_json(const TTestResult& r) {
  json j;
  j["t"] = r.t;  // infinities from degenerate tests serialize as null
  j["p"] = r.p;
  j["dof"] = r.dof;
  j["degenerate"] = r.degenerate;
  j["significant"] = r.significant;
  return j;
}

std::vector<double> column(const std::vector<RougeScore>& scores, double RougeScore::*field) {
  std::vector<double> out;
  out.reserve(scores.size());
  for (const RougeScore& s : scores) out.push_back(s.*field);
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

std::string run_synth(const RunConfig& cfg, std::ostream* log) {
  require_setting(cfg.out, "out", "synth");
  SyntheticCorpus corpus = generate_synthetic_corpus(cfg.synth_config());
  save_corpus(cfg.out, corpus.docs, cfg.to_json());
  if (log) *log << "synth: seed " << cfg.seed << ", " << corpus.docs.size() << " documents\n";
  return "synth: wrote " + std::to_string(corpus.docs.size()) + " documents to " + cfg.out;
}

std::string run_preprocess(const RunConfig& cfg, std::ostream* log) {
  require_setting(cfg.corpus, "corpus", "preprocess");
  require_setting(cfg.out, "out", "preprocess");
  std::vector<SegmentedDocument> docs = load_corpus(cfg.corpus, cfg.corpus_limits());
  save_corpus(cfg.out, docs, cfg.to_json());
  if (log) *log << "preprocess: " << docs.size() << " documents\n";
  return "preprocess: wrote " + std::to_string(docs.size()) + " documents to " + cfg.out;
}

std::string run_oracle(const RunConfig& cfg, std::ostream* log) {
  require_setting(cfg.corpus, "corpus", "oracle");
  require_setting(cfg.out, "out", "oracle");
  std::vector<SegmentedDocument> docs = load_corpus(cfg.corpus, cfg.corpus_limits());
  std::vector<OracleAnnotation> annotations = compute_annotations(docs, cfg);
  std::size_t selected = 0;
  for (const OracleAnnotation& a : annotations) selected += a.selected.size();
  save_annotations(cfg.out, docs, annotations, cfg.to_json());
  if (log) {
    *log << "oracle: " << selected << " segments selected across " << docs.size()
         << " documents\n";
  }
  return "oracle: annotated " + std::to_string(docs.size()) + " documents to " + cfg.out;
}

std::string run_train(const RunConfig& cfg, std::ostream* log) {
  require_setting(cfg.corpus, "corpus", "train");
  require_setting(cfg.val, "val", "train");
  require_setting(cfg.out, "out", "train");
  const CorpusLimits limits = cfg.corpus_limits();
  std::vector<SegmentedDocument> train_docs = load_corpus(cfg.corpus, limits);
  std::vector<SegmentedDocument> val_docs = load_corpus(cfg.val, limits);

  std::vector<OracleAnnotation> annotations;
  if (cfg.annotations.empty()) {
    if (log) *log << "train: no annotation file, running the greedy oracle in process\n";
    annotations = compute_annotations(train_docs, cfg);
  } else {
    annotations = load_annotations(cfg.annotations, train_docs);
  }

  Vocabulary vocab = Vocabulary::build(train_docs, cfg.vocab_min_freq, cfg.vocab_max_size);
  ExtAbsModel model(cfg.model_config(vocab.size()));

  TrainCallbacks callbacks;
  if (log) {
    callbacks.on_epoch = [log, &cfg](const EpochRecord& r) {
      *log << "[epoch " << r.epoch + 1 << "/" << cfg.epochs << "] loss " << fmt(r.loss_total)
           << " (ext " << fmt(r.loss_ext) << " abs " << fmt(r.loss_abs) << " kl " << fmt(r.loss_kl)
           << ") val R1 " << fmt(r.val_rouge1) << " R2 " << fmt(r.val_rouge2) << " RL "
           << fmt(r.val_rougeL) << "\n";
    };
  }
  TrainResult result =
      train_loop(model, train_docs, annotations, val_docs, vocab, cfg.train_config(),
                 cfg.to_json(), callbacks);

  std::filesystem::create_directories(cfg.out);
  const std::string ckpt_path = (std::filesystem::path(cfg.out) / "best.ckpt").string();
  write_bytes(ckpt_path, result.best_checkpoint);

  std::string history;
  {
    json meta;
    meta["_meta"] = json::parse(cfg.to_json());
    history += meta.dump() + "\n";
    for (const EpochRecord& r : result.history) {
      json rec;
      rec["epoch"] = r.epoch;
      rec["loss_ext"] = r.loss_ext;
      rec["loss_abs"] = r.loss_abs;
      rec["loss_kl"] = r.loss_kl;
      rec["loss_total"] = r.loss_total;
      rec["val_rouge1"] = r.val_rouge1;
      rec["val_rouge2"] = r.val_rouge2;
      rec["val_rougeL"] = r.val_rougeL;
      history += rec.dump() + "\n";
    }
  }
  write_text((std::filesystem::path(cfg.out) / "history.jsonl").string(), history);

  const EpochRecord& best = result.history[result.best_epoch];
  return "train: best epoch " + std::to_string(result.best_epoch + 1) + " of " +
         std::to_string(cfg.epochs) + " (val ROUGE-L " + fmt(best.val_rougeL) + "), wrote " +
         ckpt_path;
}

std::string run_summarize(const RunConfig& cfg, std::ostream* log) {
  require_setting(cfg.ckpt, "ckpt", "summarize");
  require_setting(cfg.corpus, "corpus", "summarize");
  require_setting(cfg.out, "out", "summarize");
  const MaskSource source = parse_mask_source(cfg.mask_source);

  LoadedCheckpoint loaded = load_checkpoint(cfg.ckpt);
  std::vector<SegmentedDocument> docs = load_corpus(cfg.corpus, model_limits(loaded.model));

  std::vector<OracleAnnotation> annotations;
  if (source == MaskSource::oracle) {
    require_setting(cfg.annotations, "annotations", "summarize");
    annotations = load_annotations(cfg.annotations, docs);
  }

  const InferParams params = capped_infer_params(cfg, loaded.model);
  std::vector<DocumentSummary> summaries =
      build_summaries(loaded.model, loaded.vocab, docs,
                      source == MaskSource::oracle ? &annotations : nullptr, source, params);
  save_summaries(cfg.out, summaries, cfg.to_json());
  if (log) *log << "summarize: mask source " << cfg.mask_source << "\n";
  return "summarize: wrote " + std::to_string(summaries.size()) + " summaries to " + cfg.out;
}

std::string run_eval(const RunConfig& cfg, const std::string& a_path, const std::string& b_path,
                     std::ostream* log) {
  require_setting(cfg.corpus, "corpus", "eval");
  require_setting(cfg.out, "out", "eval");
  require_setting(a_path, "a", "eval");
  require_setting(b_path, "b", "eval");
  std::vector<SegmentedDocument> refs = load_corpus(cfg.corpus, cfg.corpus_limits());
  std::vector<DocumentSummary> a = load_summaries(a_path);
  std::vector<DocumentSummary> b = load_summaries(b_path);
  EvalReport ra = evaluate_run(a, refs);
  EvalReport rb = evaluate_run(b, refs);

  json report;
  report["_meta"] = json::parse(cfg.to_json());
  report["n"] = ra.ids.size();
  report["ids"] = ra.ids;
  report["a"]["path"] = a_path;
  report["a"]["extractive_mean"] = rouge_json(ra.extractive_mean);
  report["a"]["abstractive_mean"] = rouge_json(ra.abstractive_mean);
  report["b"]["path"] = b_path;
  report["b"]["extractive_mean"] = rouge_json(rb.extractive_mean);
  report["b"]["abstractive_mean"] = rouge_json(rb.abstractive_mean);
  report["per_document"]["a_abstractive"]["rouge1"] = column(ra.abstractive, &RougeScore::rouge1);
  report["per_document"]["a_abstractive"]["rouge2"] = column(ra.abstractive, &RougeScore::rouge2);
  report["per_document"]["a_abstractive"]["rougeL"] = column(ra.abstractive, &RougeScore::rougeL);
  report["per_document"]["b_abstractive"]["rouge1"] = column(rb.abstractive, &RougeScore::rouge1);
  report["per_document"]["b_abstractive"]["rouge2"] = column(rb.abstractive, &RougeScore::rouge2);
  report["per_document"]["b_abstractive"]["rougeL"] = column(rb.abstractive, &RougeScore::rougeL);
  // One-sided paired tests of "a scores higher than b" on the decoded
  // summaries, one per metric.
  report["tests_a_gt_b"]["rouge1"] = ttest_json(paired_t_test(
      column(ra.abstractive, &RougeScore::rouge1), column(rb.abstractive, &RougeScore::rouge1)));
  report["tests_a_gt_b"]["rouge2"] = ttest_json(paired_t_test(
      column(ra.abstractive, &RougeScore::rouge2), column(rb.abstractive, &RougeScore::rouge2)));
  report["tests_a_gt_b"]["rougeL"] = ttest_json(paired_t_test(
      column(ra.abstractive, &RougeScore::rougeL), column(rb.abstractive, &RougeScore::rougeL)));
  write_text(cfg.out, report.dump(2) + "\n");

  if (log) {
    *log << "eval: abstractive ROUGE-L a " << fmt(ra.abstractive_mean.rougeL) << " vs b "
         << fmt(rb.abstractive_mean.rougeL) << "\n";
  }
  return "eval: wrote report for " + std::to_string(ra.ids.size()) + " documents to " + cfg.out;
}

std::string run_sweep(const RunConfig& cfg, std::ostream* log) {
  require_setting(cfg.ckpt, "ckpt", "sweep");
  require_setting(cfg.corpus, "corpus", "sweep");
  require_setting(cfg.out, "out", "sweep");

  LoadedCheckpoint loaded = load_checkpoint(cfg.ckpt);
  std::vector<SegmentedDocument> docs = load_corpus(cfg.corpus, model_limits(loaded.model));

  std::vector<OracleAnnotation> annotations;
  if (cfg.annotations.empty()) {
    if (log) *log << "sweep: no annotation file, running the greedy oracle in process\n";
    annotations = compute_annotations(docs, cfg);
  } else {
    annotations = load_annotations(cfg.annotations, docs);
  }

  const std::vector<MaskSource> sources = {MaskSource::none, MaskSource::oracle,
                                           MaskSource::top_z};
  const InferParams params = capped_infer_params(cfg, loaded.model);
  SweepResult sweep =
      mask_source_sweep(loaded.model, loaded.vocab, docs, &annotations, sources, params);

  json report;
  report["_meta"] = json::parse(cfg.to_json());
  report["n"] = docs.size();
  for (const EvalReport& r : sweep.reports) {
    json src;
    src["mask_source"] = r.mask_source;
    src["top_k"] = r.top_k;
    src["top_z"] = r.top_z;
    src["extractive_mean"] = rouge_json(r.extractive_mean);
    src["abstractive_mean"] = rouge_json(r.abstractive_mean);
    report["sources"].push_back(src);
  }
  const EvalReport& none = sweep.reports[0];
  const EvalReport& oracle = sweep.reports[1];
  const EvalReport& top_z = sweep.reports[2];
  report["ordering"]["oracle_minus_none_rougeL"] =
      oracle.abstractive_mean.rougeL - none.abstractive_mean.rougeL;
  report["ordering"]["oracle_minus_top_z_rougeL"] =
      oracle.abstractive_mean.rougeL - top_z.abstractive_mean.rougeL;
  report["ordering"]["top_z_minus_none_rougeL"] =
      top_z.abstractive_mean.rougeL - none.abstractive_mean.rougeL;
  report["tests"]["oracle_gt_none"] = ttest_json(paired_t_test(
      column(oracle.abstractive, &RougeScore::rougeL), column(none.abstractive, &RougeScore::rougeL)));
  report["tests"]["top_z_gt_none"] = ttest_json(paired_t_test(
      column(top_z.abstractive, &RougeScore::rougeL), column(none.abstractive, &RougeScore::rougeL)));
  report["tests"]["oracle_gt_top_z"] = ttest_json(paired_t_test(
      column(oracle.abstractive, &RougeScore::rougeL), column(top_z.abstractive, &RougeScore::rougeL)));
  write_text(cfg.out, report.dump(2) + "\n");

  return "sweep: abstractive ROUGE-L none " + fmt(none.abstractive_mean.rougeL) + " / oracle " +
         fmt(oracle.abstractive_mean.rougeL) + " / top-z " + fmt(top_z.abstractive_mean.rougeL) +
         ", wrote " + cfg.out;
}

}  // namespace extabs
