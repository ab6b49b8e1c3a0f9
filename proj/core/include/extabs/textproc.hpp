#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace extabs {

// A document whose body is an ordered list of non-empty token segments
// (sentences or discourse units) plus a reference summary.
struct SegmentedDocument {
  std::string id;
  std::vector<std::vector<std::string>> segments;
  std::vector<std::string> summary;

  int total_tokens() const;
  std::vector<std::string> flat_tokens() const;
};

// Lowercases ASCII, splits alphanumeric runs, and emits every other
// non-space character as its own token.
std::vector<std::string> tokenize(const std::string& text);

// Splits raw text into sentence strings at '.', '!', '?' (delimiter kept).
std::vector<std::string> split_sentences(const std::string& text);

// Space-joined token text and its inverse. Tokens never contain spaces,
// so the pair round-trips exactly.
std::string join_tokens(const std::vector<std::string>& tokens);
std::vector<std::string> split_tokens(const std::string& text);

struct CorpusLimits {
  int max_input_tokens = 1024;
  int max_target_tokens = 128;
};

// Tokenizes and truncates one record. Truncation keeps whole segments in
// document order until the budget is reached; summaries are cut at the
// token level. Rejects records that end up with no usable segment.
SegmentedDocument make_document(std::string id, const std::vector<std::string>& segment_texts,
                                const std::string& summary_text, const CorpusLimits& limits);

// JSONL records {"id", "segments": [...], "summary"}; lines holding a
// "_meta" key are provenance and are skipped.
std::vector<SegmentedDocument> load_corpus(const std::string& path, const CorpusLimits& limits);
void save_corpus(const std::string& path, const std::vector<SegmentedDocument>& docs,
                 const std::string& meta_json);

// Token table with four reserved ids. Ranking for built vocabularies is
// frequency descending, ties lexicographic.
class Vocabulary {
 public:
  static constexpr int pad_id = 0;
  static constexpr int bos_id = 1;
  static constexpr int eos_id = 2;
  static constexpr int unk_id = 3;
  static constexpr int reserved = 4;

  Vocabulary();
  static Vocabulary build(const std::vector<SegmentedDocument>& docs, int min_frequency,
                          int max_size);
  // Rebuilds from the non-reserved token list (checkpoint loading).
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int id_of(const std::string& token) const;
  const std::string& token_of(int id) const;
  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  // Drops reserved ids; out-of-range ids are a data error.
  std::vector<std::string> decode(const std::vector<int>& ids) const;
  const std::vector<std::string>& tokens() const { return id_to_token_; }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

void save_vocabulary(const std::string& path, const Vocabulary& vocab,
                     const std::string& meta_json);
Vocabulary load_vocabulary(const std::string& path);

// Synthetic corpus with planted salient segments: the reference summary is
// the salient segments concatenated in document order, and (by default)
// each salient segment opens with a fixed marker token so document content
// carries the saliency signal.
struct SynthConfig {
  int docs = 500;
  int segments = 10;
  int salient = 2;
  int vocab_tokens = 50;
  int min_segment_tokens = 4;
  int max_segment_tokens = 8;
  bool mark_salient = true;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticCorpus {
  std::vector<SegmentedDocument> docs;
  std::vector<std::vector<int>> salient;  // planted indices per doc, sorted
};

SyntheticCorpus generate_synthetic_corpus(const SynthConfig& cfg);

// Marker token prepended to salient segments when mark_salient is set.
const std::string& salient_marker_token();

}  // namespace extabs
