#pragma once

#include <string>
#include <vector>

#include "extabs/infer.hpp"
#include "extabs/model.hpp"
#include "extabs/oracle.hpp"
#include "extabs/rouge.hpp"
#include "extabs/textproc.hpp"

namespace extabs {

// One summarized document, as written by the summarize and sweep commands.
struct DocumentSummary {
  std::string id;
  std::vector<std::string> extractive;  // selected segment texts, document order
  std::string abstractive;              // decoded summary text
  std::vector<int> mask_segments;       // empty for the vanilla decode
  std::vector<double> scores;           // per-segment saliency
};

// JSONL records {"id", "extractive", "abstractive", "mask_segments",
// "scores"}; a leading line holding "_meta" carries provenance.
void save_summaries(const std::string& path, const std::vector<DocumentSummary>& summaries,
                    const std::string& meta_json);
std::vector<DocumentSummary> load_summaries(const std::string& path);

// Texts of the chosen segments, one string per segment, document order.
std::vector<std::string> extract_segments(const SegmentedDocument& doc,
                                          const std::vector<int>& indices);

struct EvalReport {
  std::string mask_source;  // "none"/"oracle"/"top-z", empty for file evals
  int top_k = 0;
  int top_z = 0;
  std::vector<std::string> ids;          // reference order
  std::vector<RougeScore> extractive;    // per document
  std::vector<RougeScore> abstractive;   // per document
  RougeScore extractive_mean;
  RougeScore abstractive_mean;
};

// Scores outputs against their references, aligned by id. Outputs may come
// in any order; missing or surplus ids are rejected by name.
EvalReport evaluate_run(const std::vector<DocumentSummary>& outputs,
                        const std::vector<SegmentedDocument>& references);

// Decodes the same corpus once per mask source, everything else fixed.
// annotations (index-aligned with docs) are required for the oracle source.
struct SweepResult {
  std::vector<EvalReport> reports;                    // one per source
  std::vector<std::vector<DocumentSummary>> outputs;  // matching summaries
};
SweepResult mask_source_sweep(const ExtAbsModel& model, const Vocabulary& vocab,
                              const std::vector<SegmentedDocument>& docs,
                              const std::vector<OracleAnnotation>* annotations,
                              const std::vector<MaskSource>& sources, const InferParams& params);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double regularized_incomplete_beta(double a, double b, double x);
// Student-t distribution function P(T <= t) with dof degrees of freedom.
double student_t_cdf(double t, int dof);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  int dof = 0;
  bool degenerate = false;   // differences had zero variance
  bool significant = false;  // p < alpha
};

// One-sided paired t-test of H1: mean(a - b) > 0. Zero-variance
// differences short-circuit: zero mean gives t = 0, p = 0.5; a positive
// mean is significant with p = 0; both carry the degenerate flag.
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b,
                          double alpha = 0.05);

}  // namespace extabs
