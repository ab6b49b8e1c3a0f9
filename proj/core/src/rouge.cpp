#include "extabs/rouge.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>

#include "extabs/errors.hpp"

namespace extabs {

namespace {

double f1(double hits, double cand_total, double ref_total) {
  if (hits <= 0.0 || cand_total <= 0.0 || ref_total <= 0.0) return 0.0;
  const double p = hits / cand_total;
  const double r = hits / ref_total;
  return 2.0 * p * r / (p + r);
}

std::unordered_map<std::string, int> ngram_counts(const std::vector<std::string>& tokens, int n) {
  std::unordered_map<std::string, int> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (int j = 1; j < n; ++j) {
      key += '\x1f';
      key += tokens[i + j];
    }
    ++counts[key];
  }
  return counts;
}

std::vector<std::vector<std::string>> split_sentences_at_boundaries(
    const std::vector<std::string>& tokens) {
  std::vector<std::vector<std::string>> sentences;
  std::vector<std::string> current;
  for (const std::string& tok : tokens) {
    if (is_sentence_boundary(tok)) {
      if (!current.empty()) sentences.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(tok);
    }
  }
  if (!current.empty()) sentences.push_back(std::move(current));
  return sentences;
}

std::vector<std::vector<int>> lcs_table(const std::vector<std::string>& a,
                                        const std::vector<std::string>& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::vector<int>> t(n + 1, std::vector<int>(m + 1, 0));
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      t[i][j] = a[i - 1] == b[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
    }
  }
  return t;
}

// Indices into `ref` along one canonical LCS path against `can`.
std::vector<int> lcs_indices(const std::vector<std::string>& ref,
                             const std::vector<std::string>& can) {
  const auto t = lcs_table(ref, can);
  std::vector<int> out;
  std::size_t i = ref.size(), j = can.size();
  while (i > 0 && j > 0) {
    if (ref[i - 1] == can[j - 1]) {
      out.push_back(static_cast<int>(i - 1));
      --i;
      --j;
    } else if (t[i][j - 1] > t[i - 1][j]) {
      --j;
    } else {
      --i;
    }
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::unordered_map<std::string, int> token_counts(
    const std::vector<std::vector<std::string>>& sentences) {
  std::unordered_map<std::string, int> counts;
  for (const auto& s : sentences)
    for (const auto& tok : s) ++counts[tok];
  return counts;
}

}  // namespace

bool is_sentence_boundary(const std::string& token) {
  return token == "." || token == "!" || token == "?";
}

double rouge_n(const std::vector<std::string>& candidate,
               const std::vector<std::string>& reference, int n) {
  if (n < 1) throw std::invalid_argument("rouge_n: order must be >= 1");
  const auto cand = ngram_counts(candidate, n);
  const auto ref = ngram_counts(reference, n);
  if (cand.empty() || ref.empty()) return 0.0;
  double overlap = 0.0, cand_total = 0.0, ref_total = 0.0;
  for (const auto& [key, count] : cand) {
    cand_total += count;
    auto it = ref.find(key);
    if (it != ref.end()) overlap += std::min(count, it->second);
  }
  for (const auto& [key, count] : ref) ref_total += count;
  return f1(overlap, cand_total, ref_total);
}

int lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) return 0;
  return lcs_table(a, b)[a.size()][b.size()];
}

double rouge_l(const std::vector<std::string>& candidate,
               const std::vector<std::string>& reference) {
  const auto cand_sents = split_sentences_at_boundaries(candidate);
  const auto ref_sents = split_sentences_at_boundaries(reference);
  if (cand_sents.empty() && ref_sents.empty()) {
    // All-boundary (or empty) inputs: score raw token lists directly.
    const int l = lcs_length(candidate, reference);
    return f1(l, static_cast<double>(candidate.size()), static_cast<double>(reference.size()));
  }
  if (cand_sents.empty() || ref_sents.empty()) return 0.0;

  auto ref_remaining = token_counts(ref_sents);
  auto cand_remaining = token_counts(cand_sents);
  double ref_total = 0.0, cand_total = 0.0;
  for (const auto& [tok, c] : ref_remaining) ref_total += c;
  for (const auto& [tok, c] : cand_remaining) cand_total += c;

  double hits = 0.0;
  for (const auto& ref_sent : ref_sents) {
    std::vector<char> in_union(ref_sent.size(), 0);
    for (const auto& cand_sent : cand_sents) {
      for (int idx : lcs_indices(ref_sent, cand_sent)) in_union[idx] = 1;
    }
    for (std::size_t i = 0; i < ref_sent.size(); ++i) {
      if (!in_union[i]) continue;
      auto r = ref_remaining.find(ref_sent[i]);
      auto c = cand_remaining.find(ref_sent[i]);
      if (r != ref_remaining.end() && r->second > 0 && c != cand_remaining.end() && c->second > 0) {
        hits += 1.0;
        --r->second;
        --c->second;
      }
    }
  }
  return f1(hits, cand_total, ref_total);
}

RougeScore rouge_all(const std::vector<std::string>& candidate,
                     const std::vector<std::string>& reference) {
  RougeScore s;
  s.rouge1 = rouge_n(candidate, reference, 1);
  s.rouge2 = rouge_n(candidate, reference, 2);
  s.rougeL = rouge_l(candidate, reference);
  return s;
}

double RougeObjective::operator()(const std::vector<std::string>& candidate,
                                  const std::vector<std::string>& reference) const {
  double v = 0.0;
  if (w1 != 0.0) v += w1 * rouge_n(candidate, reference, 1);
  if (w2 != 0.0) v += w2 * rouge_n(candidate, reference, 2);
  if (wl != 0.0) v += wl * rouge_l(candidate, reference);
  return v;
}

RougeObjective RougeObjective::parse(const std::string& text) {
  RougeObjective obj{0.0, 0.0, 0.0};
  std::string term;
  std::istringstream in(text);
  bool any = false;
  while (std::getline(in, term, '+')) {
    std::string t;
    for (char ch : term) {
      if (ch != ' ' && ch != '\t') t += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
    if (t == "r1") {
      obj.w1 += 1.0;
    } else if (t == "r2") {
      obj.w2 += 1.0;
    } else if (t == "rl") {
      obj.wl += 1.0;
    } else {
      throw UsageError("unknown rouge objective term '" + term + "' (expected r1, r2, rl)");
    }
    any = true;
  }
  if (!any) throw UsageError("empty rouge objective");
  return obj;
}

std::string RougeObjective::name() const {
  std::string out;
  auto append = [&out](const char* term) {
    if (!out.empty()) out += '+';
    out += term;
  };
  if (w1 != 0.0) append("r1");
  if (w2 != 0.0) append("r2");
  if (wl != 0.0) append("rl");
  return out.empty() ? "none" : out;
}

double oracle_objective(const std::vector<std::string>& candidate,
                        const std::vector<std::string>& reference) {
  return RougeObjective{}(candidate, reference);
}

}  // namespace extabs
