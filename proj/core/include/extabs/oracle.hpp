#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "extabs/rouge.hpp"
#include "extabs/textproc.hpp"

namespace extabs {

// best_improve takes the candidate with the largest strict gain each round
// (ties to the lower index); first_improve takes the first strict gain in
// index order and rescans.
enum class OracleStrategy { best_improve, first_improve };
OracleStrategy parse_oracle_strategy(const std::string& text);
std::string to_string(OracleStrategy s);

struct OracleAnnotation {
  std::vector<int> selected;  // ascending segment indices
  std::vector<int> labels;    // one 0/1 per segment
};

struct GreedyOptions {
  int budget = 8;
  RougeObjective objective{};  // r1+r2
  OracleStrategy strategy = OracleStrategy::best_improve;
};

// Greedy extractive oracle: grows a selection while the objective of the
// selected segments (concatenated in document order) strictly improves,
// up to `budget` segments. Zero-gain candidates are never selected, so the
// selection can be empty.
OracleAnnotation greedy_select(const SegmentedDocument& doc, const GreedyOptions& options);

// 0/1 saliency mask over a document's flattened token positions.
struct SaliencyMask {
  std::vector<std::uint8_t> bits;
  int count() const;
  int size() const { return static_cast<int>(bits.size()); }
  static SaliencyMask ones(int n);
};

SaliencyMask segments_to_mask(const SegmentedDocument& doc, const std::vector<int>& segments);

// Training-time mask. An empty selection (nothing improved the objective)
// falls back to the first min(budget, m) segments; the labels stay zero.
SaliencyMask make_oracle_mask(const SegmentedDocument& doc, const OracleAnnotation& annotation,
                              int budget);

// JSONL sidecar {"id", "selected", "labels"}, one line per document.
void save_annotations(const std::string& path, const std::vector<SegmentedDocument>& docs,
                      const std::vector<OracleAnnotation>& annotations,
                      const std::string& meta_json);
// Aligns records to `docs` by id; missing or surplus ids and
// selected/labels disagreements are data errors.
std::vector<OracleAnnotation> load_annotations(const std::string& path,
                                               const std::vector<SegmentedDocument>& docs);

}  // namespace extabs
