#include "extabs/textproc.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "extabs/errors.hpp"

namespace extabs {

namespace {

// nlohmann::json object keys serialize sorted, which keeps every artifact
// byte-stable across runs.
using json = nlohmann::json;

json parse_meta(const std::string& meta_json) {
  if (meta_json.empty()) return json::object();
  json j = json::parse(meta_json, nullptr, false);
  if (j.is_discarded()) throw DataError("invalid meta json: " + meta_json);
  return j;
}

}  // namespace

int SegmentedDocument::total_tokens() const {
  int n = 0;
  for (const auto& s : segments) n += static_cast<int>(s.size());
  return n;
}

std::vector<std::string> SegmentedDocument::flat_tokens() const {
  std::vector<std::string> out;
  out.reserve(total_tokens());
  for (const auto& s : segments) out.insert(out.end(), s.begin(), s.end());
  return out;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      out.push_back(current);
      current.clear();
    }
  };
  for (char raw : text) {
    const unsigned char ch = static_cast<unsigned char>(raw);
    if (std::isspace(ch)) {
      flush();
    } else if (std::isalnum(ch)) {
      current += static_cast<char>(std::tolower(ch));
    } else {
      flush();
      out.emplace_back(1, raw);
    }
  }
  flush();
  return out;
}

std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> out;
  std::string current;
  for (char ch : text) {
    current += ch;
    if (ch == '.' || ch == '!' || ch == '?') {
      // trim surrounding whitespace
      const auto a = current.find_first_not_of(" \t\n\r");
      const auto b = current.find_last_not_of(" \t\n\r");
      if (a != std::string::npos) out.push_back(current.substr(a, b - a + 1));
      current.clear();
    }
  }
  const auto a = current.find_first_not_of(" \t\n\r");
  if (a != std::string::npos) {
    const auto b = current.find_last_not_of(" \t\n\r");
    out.push_back(current.substr(a, b - a + 1));
  }
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string current;
  for (char ch : text) {
    if (ch == ' ') {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      current += ch;
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

SegmentedDocument make_document(std::string id, const std::vector<std::string>& segment_texts,
                                const std::string& summary_text, const CorpusLimits& limits) {
  if (limits.max_input_tokens < 1 || limits.max_target_tokens < 1) {
    throw std::invalid_argument("corpus limits must be positive");
  }
  SegmentedDocument doc;
  doc.id = std::move(id);
  int budget = limits.max_input_tokens;
  bool truncated_all = false;
  for (const std::string& text : segment_texts) {
    std::vector<std::string> toks = tokenize(text);
    if (toks.empty()) continue;  // whitespace-only segment
    if (static_cast<int>(toks.size()) > budget) {
      truncated_all = doc.segments.empty();
      break;
    }
    budget -= static_cast<int>(toks.size());
    doc.segments.push_back(std::move(toks));
  }
  if (doc.segments.empty()) {
    throw DataError("record '" + doc.id + "': " +
                    (truncated_all ? "first segment exceeds max-input-tokens"
                                   : "no non-empty segments"));
  }
  doc.summary = tokenize(summary_text);
  if (static_cast<int>(doc.summary.size()) > limits.max_target_tokens) {
    doc.summary.resize(limits.max_target_tokens);
  }
  return doc;
}

std::vector<SegmentedDocument> load_corpus(const std::string& path, const CorpusLimits& limits) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file: " + path);
  std::vector<SegmentedDocument> docs;
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
    if (!rec.contains("id") || !rec["id"].is_string()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": record without string id");
    }
    const std::string id = rec["id"].get<std::string>();
    if (!rec.contains("segments") || !rec["segments"].is_array() || rec["segments"].empty()) {
      throw DataError("record '" + id + "': missing or empty segments list");
    }
    std::vector<std::string> segment_texts;
    for (const auto& seg : rec["segments"]) {
      if (!seg.is_string()) throw DataError("record '" + id + "': non-string segment");
      segment_texts.push_back(seg.get<std::string>());
    }
    std::string summary_text;
    if (rec.contains("summary")) {
      if (!rec["summary"].is_string()) throw DataError("record '" + id + "': non-string summary");
      summary_text = rec["summary"].get<std::string>();
    }
    docs.push_back(make_document(id, segment_texts, summary_text, limits));
  }
  return docs;
}

void save_corpus(const std::string& path, const std::vector<SegmentedDocument>& docs,
                 const std::string& meta_json) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file: " + path);
  json meta;
  meta["_meta"] = parse_meta(meta_json);
  out << meta.dump() << '\n';
  for (const SegmentedDocument& doc : docs) {
    json rec;
    rec["id"] = doc.id;
    json segs = json::array();
    for (const auto& s : doc.segments) segs.push_back(join_tokens(s));
    rec["segments"] = std::move(segs);
    rec["summary"] = join_tokens(doc.summary);
    out << rec.dump() << '\n';
  }
}

// --- Vocabulary ---------------------------------------------------------------

Vocabulary::Vocabulary() {
  id_to_token_ = {"<pad>", "<bos>", "<eos>", "<unk>"};
  for (int i = 0; i < reserved; ++i) token_to_id_[id_to_token_[i]] = i;
}

Vocabulary Vocabulary::build(const std::vector<SegmentedDocument>& docs, int min_frequency,
                             int max_size) {
  if (min_frequency < 1) throw std::invalid_argument("min_frequency must be >= 1");
  if (max_size <= reserved) {
    throw std::invalid_argument("max_size must exceed the " + std::to_string(reserved) +
                                " reserved ids");
  }
  std::map<std::string, long long> freq;  // ordered: lexicographic tie-break for free
  for (const SegmentedDocument& doc : docs) {
    for (const auto& seg : doc.segments)
      for (const auto& tok : seg) ++freq[tok];
    for (const auto& tok : doc.summary) ++freq[tok];
  }
  std::vector<std::pair<std::string, long long>> ranked;
  for (const auto& [tok, count] : freq) {
    if (count >= min_frequency) ranked.emplace_back(tok, count);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (const auto& [tok, count] : ranked) {
    if (v.size() >= max_size) break;
    v.token_to_id_[tok] = v.size();
    v.id_to_token_.push_back(tok);
  }
  return v;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  Vocabulary v;
  for (const std::string& tok : tokens) {
    if (v.token_to_id_.count(tok)) throw DataError("duplicate vocabulary token: " + tok);
    v.token_to_id_[tok] = v.size();
    v.id_to_token_.push_back(tok);
  }
  return v;
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? unk_id : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || id >= size()) {
    throw DataError("token id " + std::to_string(id) + " outside vocabulary of " +
                    std::to_string(size()));
  }
  return id_to_token_[id];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& tok : tokens) out.push_back(id_of(tok));
  return out;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (id < 0 || id >= size()) {
      throw DataError("token id " + std::to_string(id) + " outside vocabulary of " +
                      std::to_string(size()));
    }
    if (id >= reserved) out.push_back(id_to_token_[id]);
  }
  return out;
}

void save_vocabulary(const std::string& path, const Vocabulary& vocab,
                     const std::string& meta_json) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary file: " + path);
  json j;
  j["_meta"] = parse_meta(meta_json);
  j["tokens"] = std::vector<std::string>(vocab.tokens().begin() + Vocabulary::reserved,
                                         vocab.tokens().end());
  out << j.dump(2) << '\n';
}

Vocabulary load_vocabulary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  json j = json::parse(buf.str(), nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("tokens") || !j["tokens"].is_array()) {
    throw DataError("malformed vocabulary file: " + path);
  }
  return Vocabulary::from_tokens(j["tokens"].get<std::vector<std::string>>());
}

// --- synthetic corpus -----------------------------------------------------------

namespace {

// Deterministic across platforms (std::uniform_int_distribution is not).
std::uint64_t draw_below(std::mt19937_64& rng, std::uint64_t n) { return rng() % n; }

std::vector<int> draw_salient_indices(std::mt19937_64& rng, int m, int k) {
  std::vector<int> pool(m);
  for (int i = 0; i < m; ++i) pool[i] = i;
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(draw_below(rng, m - i));
    std::swap(pool[i], pool[j]);
  }
  std::vector<int> out(pool.begin(), pool.begin() + k);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  if (docs < 1) throw std::invalid_argument("synth: docs must be >= 1");
  if (segments < 1) throw std::invalid_argument("synth: segments must be >= 1");
  if (salient < 1 || salient > segments) {
    throw std::invalid_argument("synth: salient must be in [1, segments]");
  }
  if (vocab_tokens < 2) throw std::invalid_argument("synth: vocab_tokens must be >= 2");
  if (min_segment_tokens < 1 || max_segment_tokens < min_segment_tokens) {
    throw std::invalid_argument("synth: bad segment token range");
  }
}

const std::string& salient_marker_token() {
  static const std::string marker = "hl";
  return marker;
}

SyntheticCorpus generate_synthetic_corpus(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::string> pool(cfg.vocab_tokens);
  for (int i = 0; i < cfg.vocab_tokens; ++i) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "t%03d", i);
    pool[i] = buf;
  }

  SyntheticCorpus corpus;
  corpus.docs.reserve(cfg.docs);
  corpus.salient.reserve(cfg.docs);
  for (int d = 0; d < cfg.docs; ++d) {
    SegmentedDocument doc;
    char idbuf[24];
    std::snprintf(idbuf, sizeof(idbuf), "synth-%05d", d);
    doc.id = idbuf;

    std::vector<int> salient = draw_salient_indices(rng, cfg.segments, cfg.salient);
    const int span = cfg.max_segment_tokens - cfg.min_segment_tokens + 1;
    for (int s = 0; s < cfg.segments; ++s) {
      const bool is_salient = std::binary_search(salient.begin(), salient.end(), s);
      const int len = cfg.min_segment_tokens + static_cast<int>(draw_below(rng, span));
      std::vector<std::string> seg;
      seg.reserve(len);
      if (is_salient && cfg.mark_salient) seg.push_back(salient_marker_token());
      while (static_cast<int>(seg.size()) < len) {
        seg.push_back(pool[draw_below(rng, pool.size())]);
      }
      doc.segments.push_back(std::move(seg));
    }
    for (int s : salient) {
      doc.summary.insert(doc.summary.end(), doc.segments[s].begin(), doc.segments[s].end());
    }
    corpus.docs.push_back(std::move(doc));
    corpus.salient.push_back(std::move(salient));
  }
  return corpus;
}

}  // namespace extabs
