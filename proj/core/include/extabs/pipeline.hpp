#pragma once

#include <iosfwd>
#include <string>

#include "extabs/runconfig.hpp"

namespace extabs {

// One function per pipeline stage. Each checks the settings it needs,
// reads its inputs, writes its artifacts with the resolved configuration
// embedded, and returns a one-line completion note. Progress goes to
// `log` when given.
//
// Missing required settings are usage errors; unreadable or malformed
// inputs are data errors.

// synth: settings synth_* and seed -> corpus JSONL at `out`.
std::string run_synth(const RunConfig& cfg, std::ostream* log = nullptr);

// preprocess: raw JSONL at `corpus` -> tokenized and truncated corpus at
// `out` (token budgets from max_input_tokens / max_target_tokens).
std::string run_preprocess(const RunConfig& cfg, std::ostream* log = nullptr);

// oracle: corpus at `corpus` -> greedy extractive annotations at `out`.
std::string run_oracle(const RunConfig& cfg, std::ostream* log = nullptr);

// train: corpora at `corpus` and `val` -> directory `out` holding
// best.ckpt plus history.jsonl. Oracle annotations are loaded from
// `annotations` when set and computed in process otherwise.
std::string run_train(const RunConfig& cfg, std::ostream* log = nullptr);

// summarize: checkpoint at `ckpt`, corpus at `corpus` -> summaries JSONL
// at `out` (mask built per mask_source; `annotations` required for the
// oracle source).
std::string run_summarize(const RunConfig& cfg, std::ostream* log = nullptr);

// eval: summaries at a_path and b_path scored against `corpus` -> JSON
// report at `out` with means and one-sided paired t-tests (a > b).
std::string run_eval(const RunConfig& cfg, const std::string& a_path, const std::string& b_path,
                     std::ostream* log = nullptr);

// sweep: checkpoint at `ckpt`, corpus at `corpus` -> JSON report at `out`
// comparing the none / oracle / top-z mask sources on the same documents.
std::string run_sweep(const RunConfig& cfg, std::ostream* log = nullptr);

}  // namespace extabs
