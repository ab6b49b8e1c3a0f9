#include "extabs/infer.hpp"

#include <algorithm>
#include <cmath>

#include "extabs/errors.hpp"

namespace extabs {

namespace {

struct Hypothesis {
  std::vector<int> tokens;  // content, <eos> excluded
  double logprob = 0.0;
  double score = 0.0;
  bool finished = false;
  bool via_eos = false;
};

double hyp_score(double logprob, int length, double penalty) {
  return logprob / std::pow(static_cast<double>(length), penalty);
}

// Lexicographic comparison of the decision sequences (content tokens with
// a trailing <eos> id when the hypothesis finished through it).
int lex_compare(const Hypothesis& a, const Hypothesis& b) {
  const std::size_t na = a.tokens.size() + (a.via_eos ? 1 : 0);
  const std::size_t nb = b.tokens.size() + (b.via_eos ? 1 : 0);
  for (std::size_t i = 0; i < std::min(na, nb); ++i) {
    const int ta = i < a.tokens.size() ? a.tokens[i] : Vocabulary::eos_id;
    const int tb = i < b.tokens.size() ? b.tokens[i] : Vocabulary::eos_id;
    if (ta != tb) return ta < tb ? -1 : 1;
  }
  if (na != nb) return na < nb ? -1 : 1;
  return 0;
}

// Ordering used for pruning and for the final pick: better score, then
// lower token ids at the first divergence, then earlier finish.
bool better(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  const int c = lex_compare(a, b);
  if (c != 0) return c < 0;
  return a.via_eos && !b.via_eos;
}

bool would_repeat_ngram(const std::vector<int>& tokens, int next, int n) {
  std::vector<int> seq = tokens;
  seq.push_back(next);
  if (static_cast<int>(seq.size()) < n + 1) return false;
  const auto tail = seq.end() - n;
  for (auto win = seq.begin(); win + n < seq.end(); ++win) {
    if (std::equal(win, win + n, tail)) return true;
  }
  return false;
}

}  // namespace

void BeamParams::validate() const {
  if (beam_size < 1) throw std::invalid_argument("beam_size must be >= 1");
  if (length_penalty < 0.0) throw std::invalid_argument("length_penalty must be >= 0");
  if (max_tokens < 1) throw std::invalid_argument("max_tokens must be >= 1");
  if (min_tokens < 0 || min_tokens > max_tokens) {
    throw std::invalid_argument("min_tokens must be in [0, max_tokens]");
  }
  if (block_repeat_ngram < 0) throw std::invalid_argument("block_repeat_ngram must be >= 0");
}

BeamResult beam_search_decode(const StepFn& step, int vocab_size, const BeamParams& params) {
  params.validate();
  if (vocab_size <= Vocabulary::eos_id) {
    throw std::invalid_argument("beam search: vocab too small for reserved ids");
  }

  std::vector<Hypothesis> live(1);
  std::vector<Hypothesis> finished;

  for (int depth = 0; depth < params.max_tokens && !live.empty(); ++depth) {
    std::vector<Hypothesis> candidates;
    candidates.reserve(live.size() * vocab_size);
    for (const Hypothesis& hyp : live) {
      std::vector<int> prefix;
      prefix.reserve(hyp.tokens.size() + 1);
      prefix.push_back(Vocabulary::bos_id);
      prefix.insert(prefix.end(), hyp.tokens.begin(), hyp.tokens.end());
      const std::vector<double> probs = step(prefix);
      if (static_cast<int>(probs.size()) != vocab_size) {
        throw std::invalid_argument("beam search: step returned " +
                                    std::to_string(probs.size()) + " probabilities for vocab " +
                                    std::to_string(vocab_size));
      }
      for (int tok = 0; tok < vocab_size; ++tok) {
        const bool is_eos = tok == Vocabulary::eos_id;
        if (is_eos && static_cast<int>(hyp.tokens.size()) < params.min_tokens) continue;
        if (!is_eos && params.block_repeat_ngram > 0 &&
            would_repeat_ngram(hyp.tokens, tok, params.block_repeat_ngram)) {
          continue;
        }
        Hypothesis next;
        next.tokens = hyp.tokens;
        if (!is_eos) next.tokens.push_back(tok);
        next.logprob = hyp.logprob + std::log(std::max(probs[tok], 1e-300));
        const int length = static_cast<int>(hyp.tokens.size()) + 1;  // new token or <eos>
        next.score = hyp_score(next.logprob, length, params.length_penalty);
        next.via_eos = is_eos;
        next.finished = is_eos || static_cast<int>(next.tokens.size()) >= params.max_tokens;
        candidates.push_back(std::move(next));
      }
    }
    if (candidates.empty()) break;  // every continuation was blocked

    const std::size_t keep = std::min<std::size_t>(params.beam_size, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + keep, candidates.end(), better);
    candidates.resize(keep);

    live.clear();
    for (Hypothesis& hyp : candidates) {
      if (hyp.finished) {
        finished.push_back(std::move(hyp));
      } else {
        live.push_back(std::move(hyp));
      }
    }
  }

  // Anything still live ran out of depth without retiring; it competes as-is.
  for (Hypothesis& hyp : live) finished.push_back(std::move(hyp));
  if (finished.empty()) throw NumericError("beam search: no hypothesis produced");
  const Hypothesis& best = *std::min_element(
      finished.begin(), finished.end(),
      [](const Hypothesis& a, const Hypothesis& b) { return better(a, b); });

  BeamResult out;
  out.tokens = best.tokens;
  out.score = best.score;
  out.logprob = best.logprob;
  out.finished = best.via_eos;
  return out;
}

std::vector<int> top_k_segments(const std::vector<double>& scores, int k) {
  if (k < 1) throw std::invalid_argument("top_k_segments: k must be >= 1");
  const int m = static_cast<int>(scores.size());
  if (m == 0) throw std::invalid_argument("top_k_segments: no scores");
  std::vector<int> order(m);
  for (int i = 0; i < m; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&scores](int a, int b) { return scores[a] > scores[b]; });
  order.resize(std::min(k, m));
  std::sort(order.begin(), order.end());
  return order;
}

SaliencyMask predicted_mask(const SegmentedDocument& doc, const std::vector<double>& scores,
                            int z) {
  if (scores.size() != doc.segments.size()) {
    throw std::invalid_argument("predicted_mask: " + std::to_string(scores.size()) +
                                " scores for " + std::to_string(doc.segments.size()) +
                                " segments");
  }
  return segments_to_mask(doc, top_k_segments(scores, z));
}

MaskSource parse_mask_source(const std::string& text) {
  if (text == "none") return MaskSource::none;
  if (text == "oracle") return MaskSource::oracle;
  if (text == "top-z") return MaskSource::top_z;
  throw UsageError("unknown mask source '" + text + "' (expected none, oracle, top-z)");
}

std::string to_string(MaskSource source) {
  switch (source) {
    case MaskSource::none: return "none";
    case MaskSource::oracle: return "oracle";
    case MaskSource::top_z: return "top-z";
  }
  throw std::invalid_argument("bad mask source");
}

void InferParams::validate() const {
  if (top_k < 1) throw std::invalid_argument("top_k must be >= 1");
  if (top_z < 1) throw std::invalid_argument("top_z must be >= 1");
  if (max_oracle_selections < 1) {
    throw std::invalid_argument("max_oracle_selections must be >= 1");
  }
  beam.validate();
}

SummaryResult summarize_document(const ExtAbsModel& model, const Vocabulary& vocab,
                                 const SegmentedDocument& doc, MaskSource source,
                                 const OracleAnnotation* oracle, const InferParams& params) {
  params.validate();
  if (params.beam.max_tokens > model.config().max_target_tokens) {
    throw std::invalid_argument("summarize: beam max_tokens exceeds model max_target_tokens");
  }
  const std::vector<int> ids = vocab.encode(doc.flat_tokens());
  const SegmentBoundaries boundaries = SegmentBoundaries::from_document(doc);

  Tape tape(false);
  const EncoderOutput enc = model.encode(tape, ids, static_cast<int>(ids.size()), boundaries);
  SummaryResult out;
  out.scores = model.score_segments(tape, enc).values();
  out.extract_indices = top_k_segments(out.scores, params.top_k);

  SaliencyMask mask;
  const SaliencyMask* mask_ptr = nullptr;
  switch (source) {
    case MaskSource::none:
      break;  // vanilla cross-attention, mask_segments stays empty
    case MaskSource::oracle: {
      if (oracle == nullptr) {
        throw std::invalid_argument("summarize: oracle mask source needs an annotation");
      }
      mask = make_oracle_mask(doc, *oracle, params.max_oracle_selections);
      mask_ptr = &mask;
      if (oracle->selected.empty()) {
        const int m = static_cast<int>(doc.segments.size());
        for (int s = 0; s < std::min(params.max_oracle_selections, m); ++s) {
          out.mask_segments.push_back(s);
        }
      } else {
        out.mask_segments = oracle->selected;
      }
      break;
    }
    case MaskSource::top_z: {
      out.mask_segments = top_k_segments(out.scores, params.top_z);
      mask = segments_to_mask(doc, out.mask_segments);
      mask_ptr = &mask;
      break;
    }
  }

  const StepFn step = [&model, &enc, mask_ptr](const std::vector<int>& prefix) {
    return model.decode_step(enc, mask_ptr, prefix);
  };
  BeamResult beam = beam_search_decode(step, model.config().vocab_size, params.beam);
  out.abstractive = vocab.decode(beam.tokens);
  return out;
}

}  // namespace extabs
