#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "extabs/errors.hpp"
#include "extabs/infer.hpp"
#include "extabs/model.hpp"
#include "extabs/oracle.hpp"
#include "extabs/textproc.hpp"

using namespace extabs;

namespace {

constexpr int kEos = Vocabulary::eos_id;

// Markov toy decoder: the distribution depends on the position and the last
// generated token only. Deterministic given a seed.
struct ToyTable {
  int vocab = 0;
  int depth = 0;
  std::vector<std::vector<std::vector<double>>> p;  // [pos][last + 1][tok]

  static ToyTable random(int vocab, int depth, std::uint64_t seed) {
    ToyTable t;
    t.vocab = vocab;
    t.depth = depth;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    t.p.assign(depth, std::vector<std::vector<double>>(vocab + 1, std::vector<double>(vocab)));
    for (auto& by_last : t.p) {
      for (auto& dist : by_last) {
        double total = 0.0;
        for (double& x : dist) total += (x = u(rng));
        for (double& x : dist) x /= total;
      }
    }
    return t;
  }

  StepFn step() const {
    return [this](const std::vector<int>& prefix) {
      const int pos = static_cast<int>(prefix.size()) - 1;  // generated so far
      const int last = prefix.size() > 1 ? prefix.back() : -1;
      return p.at(pos).at(last + 1);
    };
  }
};

// Independent decode oracles used to pin the beam search behaviour. They
// reimplement the published contract (score, tie rules) from scratch.

struct Outcome {
  std::vector<int> tokens;
  double logprob = 0.0;
  double score = 0.0;
  bool via_eos = false;
};

bool outcome_better(const Outcome& a, const Outcome& b) {
  if (a.score != b.score) return a.score > b.score;
  std::vector<int> da = a.tokens, db = b.tokens;
  if (a.via_eos) da.push_back(kEos);
  if (b.via_eos) db.push_back(kEos);
  if (da != db) return da < db;
  return a.via_eos && !b.via_eos;
}

void enumerate(const StepFn& step, int vocab, const BeamParams& params, std::vector<int>& tokens,
               double logprob, std::vector<Outcome>& out) {
  const int len = static_cast<int>(tokens.size());
  if (len >= params.max_tokens) {
    out.push_back({tokens, logprob, logprob / std::pow(double(len), params.length_penalty),
                   false});
    return;
  }
  std::vector<int> prefix;
  prefix.push_back(Vocabulary::bos_id);
  prefix.insert(prefix.end(), tokens.begin(), tokens.end());
  const std::vector<double> probs = step(prefix);
  for (int tok = 0; tok < vocab; ++tok) {
    const double lp = logprob + std::log(std::max(probs[tok], 1e-300));
    if (tok == kEos) {
      if (len < params.min_tokens) continue;
      out.push_back({tokens, lp, lp / std::pow(double(len + 1), params.length_penalty), true});
    } else {
      tokens.push_back(tok);
      enumerate(step, vocab, params, tokens, lp, out);
      tokens.pop_back();
    }
  }
}

Outcome exhaustive_best(const StepFn& step, int vocab, const BeamParams& params) {
  std::vector<Outcome> all;
  std::vector<int> tokens;
  enumerate(step, vocab, params, tokens, 0.0, all);
  REQUIRE(!all.empty());
  return *std::min_element(all.begin(), all.end(), outcome_better);
}

Outcome greedy_reference(const StepFn& step, int vocab, const BeamParams& params) {
  Outcome out;
  std::vector<int> prefix = {Vocabulary::bos_id};
  while (static_cast<int>(out.tokens.size()) < params.max_tokens) {
    const std::vector<double> probs = step(prefix);
    int best = -1;
    for (int tok = 0; tok < vocab; ++tok) {
      if (tok == kEos && static_cast<int>(out.tokens.size()) < params.min_tokens) continue;
      if (best < 0 || probs[tok] > probs[best]) best = tok;
    }
    out.logprob += std::log(std::max(probs[best], 1e-300));
    if (best == kEos) {
      out.via_eos = true;
      out.score = out.logprob /
                  std::pow(double(out.tokens.size() + 1), params.length_penalty);
      return out;
    }
    out.tokens.push_back(best);
    prefix.push_back(best);
  }
  out.score = out.logprob / std::pow(double(out.tokens.size()), params.length_penalty);
  return out;
}

// Frozen three-branch table: greedy walks into token 3 twice, while the
// globally best hypothesis is a single token 4 followed by <eos>.
StepFn trap_table() {
  return [](const std::vector<int>& prefix) -> std::vector<double> {
    if (prefix == std::vector<int>{Vocabulary::bos_id}) {
      return {0.01, 0.01, 0.03, 0.55, 0.40};
    }
    if (prefix == std::vector<int>{Vocabulary::bos_id, 3}) {
      return {0.02, 0.02, 0.30, 0.33, 0.33};
    }
    if (prefix == std::vector<int>{Vocabulary::bos_id, 4}) {
      return {0.01, 0.01, 0.90, 0.04, 0.04};
    }
    if (prefix == std::vector<int>{Vocabulary::bos_id, 3, 3}) {
      return {0.02, 0.02, 0.90, 0.03, 0.03};
    }
    return {0.05, 0.05, 0.60, 0.15, 0.15};
  };
}

}  // namespace

TEST_SUITE("infer") {

TEST_CASE("beam parameter validation") {
  BeamParams p;
  CHECK_NOTHROW(p.validate());
  p.beam_size = 0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = BeamParams{};
  p.length_penalty = -0.5;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = BeamParams{};
  p.min_tokens = 10;
  p.max_tokens = 5;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("an unambiguous sequence is found at any beam width") {
  // One near-deterministic path: 5, 7, <eos>.
  StepFn step = [](const std::vector<int>& prefix) {
    std::vector<double> p(9, 0.00125);
    if (prefix.size() == 1) {
      p[5] = 0.99;
    } else if (prefix.back() == 5) {
      p[7] = 0.99;
    } else {
      p[kEos] = 0.99;
    }
    return p;
  };
  for (int width : {1, 2, 4, 32}) {
    BeamParams params;
    params.beam_size = width;
    params.max_tokens = 6;
    BeamResult r = beam_search_decode(step, 9, params);
    CHECK(r.tokens == std::vector<int>{5, 7});
    CHECK(r.finished);
    CHECK(r.logprob == doctest::Approx(3.0 * std::log(0.99)).epsilon(1e-12));
    CHECK(r.score == doctest::Approx(r.logprob / 3.0).epsilon(1e-12));
  }
}

TEST_CASE("beam of one is greedy decoding") {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    ToyTable table = ToyTable::random(6, 5, seed);
    BeamParams params;
    params.beam_size = 1;
    params.max_tokens = 5;
    params.length_penalty = (seed % 3 == 0) ? 2.0 : 1.0;
    BeamResult r = beam_search_decode(table.step(), 6, params);
    Outcome want = greedy_reference(table.step(), 6, params);
    CHECK(r.tokens == want.tokens);
    CHECK(r.finished == want.via_eos);
    CHECK(r.logprob == doctest::Approx(want.logprob).epsilon(1e-12));
    CHECK(r.score == doctest::Approx(want.score).epsilon(1e-12));
  }
}

TEST_CASE("a beam covering the whole hypothesis space is exhaustive search") {
  // 4 content tokens, depth 4: at most 4^3 * 5 = 320 candidates per round.
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    ToyTable table = ToyTable::random(5, 4, seed);
    BeamParams params;
    params.beam_size = 1000;
    params.max_tokens = 4;
    params.length_penalty = (seed % 2 == 0) ? 1.0 : 0.7;
    BeamResult r = beam_search_decode(table.step(), 5, params);
    Outcome want = exhaustive_best(table.step(), 5, params);
    CHECK(r.tokens == want.tokens);
    CHECK(r.finished == want.via_eos);
    CHECK(r.score == doctest::Approx(want.score).epsilon(1e-12));
  }
}

TEST_CASE("a wider beam escapes the greedy trap") {
  BeamParams params;
  params.max_tokens = 4;

  params.beam_size = 1;
  BeamResult greedy = beam_search_decode(trap_table(), 5, params);
  CHECK(greedy.tokens == std::vector<int>{3, 3});
  CHECK(greedy.finished);
  CHECK(greedy.logprob == doctest::Approx(std::log(0.55 * 0.33 * 0.90)).epsilon(1e-12));

  params.beam_size = 5;
  BeamResult wide = beam_search_decode(trap_table(), 5, params);
  CHECK(wide.tokens == std::vector<int>{4});
  CHECK(wide.finished);
  CHECK(wide.logprob == doctest::Approx(std::log(0.40 * 0.90)).epsilon(1e-12));
  CHECK(wide.score == doctest::Approx(std::log(0.36) / 2.0).epsilon(1e-12));
  CHECK(wide.score > greedy.score);
}

TEST_CASE("length penalty above one rewards longer hypotheses") {
  BeamParams params;
  params.max_tokens = 4;
  params.beam_size = 5;
  params.length_penalty = 2.0;
  BeamResult r = beam_search_decode(trap_table(), 5, params);
  // log(0.163)/9 beats log(0.36)/4 under the squared normalizer.
  CHECK(r.tokens == std::vector<int>{3, 3});
  CHECK(r.score == doctest::Approx(std::log(0.55 * 0.33 * 0.90) / 9.0).epsilon(1e-12));
}

TEST_CASE("minimum length blocks an early finish") {
  BeamParams params;
  params.max_tokens = 4;
  params.beam_size = 5;
  params.min_tokens = 2;
  BeamResult r = beam_search_decode(trap_table(), 5, params);
  CHECK(r.tokens.size() >= 2);
  CHECK(r.tokens == std::vector<int>{3, 3});

  // The exhaustive oracle agrees under the same constraint.
  Outcome want = exhaustive_best(trap_table(), 5, params);
  CHECK(r.tokens == want.tokens);
  CHECK(r.score == doctest::Approx(want.score).epsilon(1e-12));
}

TEST_CASE("repeat n-gram blocking") {
  // Token 3 dominates everywhere: unblocked decoding repeats it to the cap.
  StepFn step = [](const std::vector<int>&) {
    return std::vector<double>{0.05, 0.05, 0.10, 0.60, 0.20};
  };
  BeamParams params;
  params.beam_size = 1;
  params.max_tokens = 4;
  BeamResult plain = beam_search_decode(step, 5, params);
  CHECK(plain.tokens == std::vector<int>{3, 3, 3, 3});
  CHECK_FALSE(plain.finished);

  params.block_repeat_ngram = 1;  // no token may reappear
  BeamResult blocked = beam_search_decode(step, 5, params);
  CHECK(blocked.tokens == std::vector<int>{3, 4});
  CHECK(blocked.finished);

  params.block_repeat_ngram = 2;
  BeamResult bigram = beam_search_decode(step, 5, params);
  // 3 3 is fine until the bigram (3,3) would repeat: 3 3 3 is blocked.
  CHECK(bigram.tokens == std::vector<int>{3, 3, 4, 3});
}

TEST_CASE("step function must cover the vocabulary") {
  StepFn bad = [](const std::vector<int>&) { return std::vector<double>{0.5, 0.5}; };
  BeamParams params;
  CHECK_THROWS_AS(beam_search_decode(bad, 5, params), std::invalid_argument);
}

TEST_CASE("top-k segment selection") {
  std::vector<double> scores = {0.1, 0.9, 0.3, 0.9, 0.2};
  CHECK(top_k_segments(scores, 2) == std::vector<int>{1, 3});
  CHECK(top_k_segments(scores, 3) == std::vector<int>{1, 2, 3});
  CHECK(top_k_segments(scores, 99) == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(top_k_segments({0.5, 0.5, 0.5}, 2) == std::vector<int>{0, 1});  // ties to low index
  CHECK_THROWS_AS(top_k_segments(scores, 0), std::invalid_argument);
  CHECK_THROWS_AS(top_k_segments({}, 1), std::invalid_argument);
}

TEST_CASE("predicted mask covers the chosen segments") {
  SegmentedDocument doc;
  doc.segments = {{"a", "b"}, {"c"}, {"d", "e", "f"}};
  SaliencyMask m = predicted_mask(doc, {0.2, 0.9, 0.5}, 2);
  CHECK(m.bits == std::vector<std::uint8_t>{0, 0, 1, 1, 1, 1});
  CHECK(m.count() == 4);
  CHECK_THROWS_AS(predicted_mask(doc, {0.2, 0.9}, 2), std::invalid_argument);
}

TEST_CASE("mask source parsing") {
  CHECK(parse_mask_source("none") == MaskSource::none);
  CHECK(parse_mask_source("oracle") == MaskSource::oracle);
  CHECK(parse_mask_source("top-z") == MaskSource::top_z);
  CHECK_THROWS_AS(parse_mask_source("topz"), UsageError);
  CHECK(to_string(MaskSource::top_z) == "top-z");
}

TEST_CASE("document summarization runs one encoder pass per call") {
  Vocabulary vocab = Vocabulary::from_tokens({"aa", "bb", "cc", "dd", "ee", "ff"});
  ModelConfig c;
  c.vocab_size = vocab.size();
  c.d_model = 8;
  c.n_heads = 2;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.ffn_dim = 16;
  c.max_input_tokens = 16;
  c.max_target_tokens = 6;
  c.seed = 5;
  ExtAbsModel model(c);

  SegmentedDocument doc;
  doc.id = "t1";
  doc.segments = {{"aa", "bb"}, {"cc", "dd"}, {"ee", "ff", "aa"}};
  doc.summary = {"cc", "dd"};

  InferParams params;
  params.top_k = 2;
  params.top_z = 1;
  params.beam.beam_size = 2;
  params.beam.max_tokens = 6;

  model.reset_encoder_forward_count();
  SummaryResult none = summarize_document(model, vocab, doc, MaskSource::none, nullptr, params);
  CHECK(model.encoder_forward_count() == 1);
  CHECK(none.mask_segments.empty());
  CHECK(none.scores.size() == 3);
  CHECK(none.extract_indices.size() == 2);
  CHECK(std::is_sorted(none.extract_indices.begin(), none.extract_indices.end()));

  SummaryResult top = summarize_document(model, vocab, doc, MaskSource::top_z, nullptr, params);
  CHECK(model.encoder_forward_count() == 2);
  REQUIRE(top.mask_segments.size() == 1);
  CHECK(top.mask_segments == top_k_segments(top.scores, 1));

  OracleAnnotation ann;
  ann.selected = {1};
  ann.labels = {0, 1, 0};
  SummaryResult orc = summarize_document(model, vocab, doc, MaskSource::oracle, &ann, params);
  CHECK(orc.mask_segments == std::vector<int>{1});
  CHECK_THROWS_AS(summarize_document(model, vocab, doc, MaskSource::oracle, nullptr, params),
                  std::invalid_argument);

  // An empty oracle selection falls back to the leading segments.
  OracleAnnotation empty;
  empty.selected = {};
  empty.labels = {0, 0, 0};
  params.max_oracle_selections = 2;
  SummaryResult fb = summarize_document(model, vocab, doc, MaskSource::oracle, &empty, params);
  CHECK(fb.mask_segments == std::vector<int>{0, 1});

  // Decoded tokens never include reserved ids and respect the cap.
  CHECK(top.abstractive.size() <= 6);
  for (const std::string& t : top.abstractive) CHECK(vocab.id_of(t) >= Vocabulary::reserved);
}

}  // TEST_SUITE
