#pragma once

#include <string>
#include <vector>

namespace extabs {

struct RougeScore {
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
};

// Tokens that end a sentence for summary-level LCS scoring.
bool is_sentence_boundary(const std::string& token);

// Clipped n-gram overlap F1. Zero when either side has fewer than n tokens
// or the overlap is empty.
double rouge_n(const std::vector<std::string>& candidate,
               const std::vector<std::string>& reference, int n);

// Longest common subsequence length, O(|a| * |b|).
int lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

// Summary-level LCS F1: inputs are split into sentences at boundary tokens
// (the boundaries themselves are not scored), each reference sentence takes
// the union of its LCS matches against every candidate sentence, and hits
// are clipped by remaining token counts on both sides. Inputs with no
// sentence structure fall back to plain LCS over the raw token lists.
double rouge_l(const std::vector<std::string>& candidate,
               const std::vector<std::string>& reference);

RougeScore rouge_all(const std::vector<std::string>& candidate,
                     const std::vector<std::string>& reference);

// Weighted combination of ROUGE F1 scores, e.g. "r1+r2" or "r2+rl".
struct RougeObjective {
  double w1 = 1.0;
  double w2 = 1.0;
  double wl = 0.0;

  double operator()(const std::vector<std::string>& candidate,
                    const std::vector<std::string>& reference) const;
  static RougeObjective parse(const std::string& text);
  std::string name() const;
};

// Default selection objective: ROUGE-1 F1 + ROUGE-2 F1.
double oracle_objective(const std::vector<std::string>& candidate,
                        const std::vector<std::string>& reference);

}  // namespace extabs
