#include "extabs/oracle.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "extabs/errors.hpp"

namespace extabs {

namespace {

using json = nlohmann::json;

std::vector<std::string> candidate_tokens(const SegmentedDocument& doc,
                                          const std::vector<char>& in_set) {
  std::vector<std::string> out;
  for (std::size_t s = 0; s < doc.segments.size(); ++s) {
    if (in_set[s]) out.insert(out.end(), doc.segments[s].begin(), doc.segments[s].end());
  }
  return out;
}

}  // namespace

OracleStrategy parse_oracle_strategy(const std::string& text) {
  if (text == "best-improve") return OracleStrategy::best_improve;
  if (text == "first-improve") return OracleStrategy::first_improve;
  throw UsageError("unknown oracle strategy '" + text +
                   "' (expected best-improve or first-improve)");
}

std::string to_string(OracleStrategy s) {
  return s == OracleStrategy::best_improve ? "best-improve" : "first-improve";
}

OracleAnnotation greedy_select(const SegmentedDocument& doc, const GreedyOptions& options) {
  if (options.budget < 1) throw std::invalid_argument("greedy_select: budget must be >= 1");
  const int m = static_cast<int>(doc.segments.size());
  std::vector<char> in_set(m, 0);
  OracleAnnotation out;
  double current = 0.0;

  while (static_cast<int>(out.selected.size()) < options.budget) {
    int picked = -1;
    double picked_score = current;
    for (int i = 0; i < m; ++i) {
      if (in_set[i]) continue;
      in_set[i] = 1;
      const double score = options.objective(candidate_tokens(doc, in_set), doc.summary);
      in_set[i] = 0;
      if (score > picked_score) {
        picked = i;
        picked_score = score;
        if (options.strategy == OracleStrategy::first_improve) break;
      }
    }
    if (picked < 0) break;  // no strict improvement left
    in_set[picked] = 1;
    out.selected.push_back(picked);
    current = picked_score;
  }

  std::sort(out.selected.begin(), out.selected.end());
  out.labels.assign(m, 0);
  for (int s : out.selected) out.labels[s] = 1;
  return out;
}

int SaliencyMask::count() const {
  return static_cast<int>(std::accumulate(bits.begin(), bits.end(), 0));
}

SaliencyMask SaliencyMask::ones(int n) {
  if (n < 0) throw std::invalid_argument("mask size must be non-negative");
  SaliencyMask m;
  m.bits.assign(n, 1);
  return m;
}

SaliencyMask segments_to_mask(const SegmentedDocument& doc, const std::vector<int>& segments) {
  const int m = static_cast<int>(doc.segments.size());
  std::vector<char> in_set(m, 0);
  for (int s : segments) {
    if (s < 0 || s >= m) {
      throw DataError("record '" + doc.id + "': segment index " + std::to_string(s) +
                      " outside document of " + std::to_string(m) + " segments");
    }
    in_set[s] = 1;
  }
  SaliencyMask mask;
  mask.bits.reserve(doc.total_tokens());
  for (int s = 0; s < m; ++s) {
    mask.bits.insert(mask.bits.end(), doc.segments[s].size(), in_set[s] ? 1 : 0);
  }
  return mask;
}

SaliencyMask make_oracle_mask(const SegmentedDocument& doc, const OracleAnnotation& annotation,
                              int budget) {
  if (budget < 1) throw std::invalid_argument("make_oracle_mask: budget must be >= 1");
  if (!annotation.selected.empty()) {
    return segments_to_mask(doc, annotation.selected);
  }
  const int m = static_cast<int>(doc.segments.size());
  std::vector<int> fallback(std::min(budget, m));
  std::iota(fallback.begin(), fallback.end(), 0);
  return segments_to_mask(doc, fallback);
}

void save_annotations(const std::string& path, const std::vector<SegmentedDocument>& docs,
                      const std::vector<OracleAnnotation>& annotations,
                      const std::string& meta_json) {
  if (docs.size() != annotations.size()) {
    throw std::invalid_argument("save_annotations: " + std::to_string(annotations.size()) +
                                " annotations for " + std::to_string(docs.size()) + " documents");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write annotation file: " + path);
  json meta;
  meta["_meta"] = meta_json.empty() ? json::object() : json::parse(meta_json);
  out << meta.dump() << '\n';
  for (std::size_t i = 0; i < docs.size(); ++i) {
    json rec;
    rec["id"] = docs[i].id;
    rec["selected"] = annotations[i].selected;
    rec["labels"] = annotations[i].labels;
    out << rec.dump() << '\n';
  }
}

std::vector<OracleAnnotation> load_annotations(const std::string& path,
                                               const std::vector<SegmentedDocument>& docs) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open annotation file: " + path);
  std::map<std::string, OracleAnnotation> by_id;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec = json::parse(line, nullptr, false);
    if (rec.is_discarded() || !rec.is_object()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed JSON record");
    }
    if (rec.contains("_meta")) continue;
    if (!rec.contains("id") || !rec.contains("selected") || !rec.contains("labels")) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": annotation record needs id, selected, labels");
    }
    const std::string id = rec["id"].get<std::string>();
    OracleAnnotation a;
    a.selected = rec["selected"].get<std::vector<int>>();
    a.labels = rec["labels"].get<std::vector<int>>();
    if (!by_id.emplace(id, std::move(a)).second) {
      throw DataError("duplicate annotation for id '" + id + "'");
    }
  }

  std::vector<OracleAnnotation> out;
  out.reserve(docs.size());
  for (const SegmentedDocument& doc : docs) {
    auto it = by_id.find(doc.id);
    if (it == by_id.end()) throw DataError("no annotation for document '" + doc.id + "'");
    OracleAnnotation& a = it->second;
    const int m = static_cast<int>(doc.segments.size());
    if (static_cast<int>(a.labels.size()) != m) {
      throw DataError("annotation for '" + doc.id + "' has " + std::to_string(a.labels.size()) +
                      " labels for " + std::to_string(m) + " segments");
    }
    std::vector<int> from_labels;
    for (int s = 0; s < m; ++s) {
      if (a.labels[s] != 0 && a.labels[s] != 1) {
        throw DataError("annotation for '" + doc.id + "' has non-binary label");
      }
      if (a.labels[s] == 1) from_labels.push_back(s);
    }
    if (!std::is_sorted(a.selected.begin(), a.selected.end()) || from_labels != a.selected) {
      throw DataError("annotation for '" + doc.id + "' has labels inconsistent with selection");
    }
    out.push_back(std::move(a));
    by_id.erase(it);
  }
  if (!by_id.empty()) {
    throw DataError("annotation file has " + std::to_string(by_id.size()) +
                    " records with no matching document, first id '" + by_id.begin()->first + "'");
  }
  return out;
}

}  // namespace extabs
