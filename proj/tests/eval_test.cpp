#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "doctest.h"
#include "extabs/errors.hpp"
#include "extabs/eval.hpp"
#include "extabs/infer.hpp"
#include "extabs/model.hpp"
#include "extabs/textproc.hpp"

using namespace extabs;

namespace {

// Adaptive Simpson quadrature, the reference for the t distribution below.
double simpson_rec(const std::function<double(double)>& f, double a, double b, double fa,
                   double fb, double fm, double whole, double eps, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::fabs(left + right - whole) < 15.0 * eps) {
    return left + right + (left + right - whole) / 15.0;
  }
  return simpson_rec(f, a, m, fa, fm, flm, left, eps * 0.5, depth - 1) +
         simpson_rec(f, m, b, fm, fb, frm, right, eps * 0.5, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double eps) {
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson_rec(f, a, b, fa, fb, fm, whole, eps, 40);
}

double t_pdf(double x, int dof) {
  const double v = static_cast<double>(dof);
  const double ln_norm = std::lgamma(0.5 * (v + 1.0)) - std::lgamma(0.5 * v) -
                         0.5 * std::log(v * M_PI);
  return std::exp(ln_norm - 0.5 * (v + 1.0) * std::log1p(x * x / v));
}

double t_cdf_quadrature(double t, int dof) {
  if (t == 0.0) return 0.5;
  const double mass =
      integrate([dof](double x) { return t_pdf(x, dof); }, 0.0, std::fabs(t), 1e-12);
  return t > 0.0 ? 0.5 + mass : 0.5 - mass;
}

ModelConfig sweep_model_config(int vocab) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.d_model = 8;
  c.n_heads = 2;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.ffn_dim = 16;
  c.max_input_tokens = 32;
  c.max_target_tokens = 8;
  c.seed = 13;
  return c;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("incomplete beta closed forms") {
  // I_x(1, 1) = x; I_x(a, 1) = x^a; I_x(1, b) = 1 - (1-x)^b.
  for (double x : {0.0, 0.1, 0.37, 0.5, 0.82, 1.0}) {
    CHECK(regularized_incomplete_beta(1.0, 1.0, x) == doctest::Approx(x).epsilon(1e-12));
    CHECK(regularized_incomplete_beta(3.0, 1.0, x) ==
          doctest::Approx(std::pow(x, 3.0)).epsilon(1e-10));
    CHECK(regularized_incomplete_beta(1.0, 2.5, x) ==
          doctest::Approx(1.0 - std::pow(1.0 - x, 2.5)).epsilon(1e-10));
  }
  // Reflection: I_x(a, b) + I_{1-x}(b, a) = 1.
  for (double x : {0.05, 0.3, 0.77}) {
    const double sum = regularized_incomplete_beta(2.5, 4.0, x) +
                       regularized_incomplete_beta(4.0, 2.5, 1.0 - x);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(regularized_incomplete_beta(0.0, 1.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(regularized_incomplete_beta(1.0, 1.0, 1.5), std::invalid_argument);
}

TEST_CASE("t distribution against closed forms") {
  // One degree of freedom is Cauchy, two has an elementary antiderivative.
  for (double t : {-4.0, -1.3, -0.2, 0.0, 0.4, 1.0, 2.7, 9.0}) {
    CHECK(student_t_cdf(t, 1) ==
          doctest::Approx(0.5 + std::atan(t) / M_PI).epsilon(1e-10));
    CHECK(student_t_cdf(t, 2) ==
          doctest::Approx(0.5 + t / (2.0 * std::sqrt(2.0 + t * t))).epsilon(1e-10));
  }
  CHECK_THROWS_AS(student_t_cdf(1.0, 0), std::invalid_argument);
}

TEST_CASE("t distribution against quadrature") {
  for (int dof : {3, 4, 7, 12, 30}) {
    for (double t : {-3.1, -1.0, -0.25, 0.0, 0.6, 1.554, 2.086, 5.5}) {
      CHECK(student_t_cdf(t, dof) == doctest::Approx(t_cdf_quadrature(t, dof)).epsilon(1e-8));
    }
  }
  // Familiar table entries.
  CHECK(student_t_cdf(1.812, 10) == doctest::Approx(0.95).epsilon(2e-4));
  CHECK(student_t_cdf(2.086, 20) == doctest::Approx(0.975).epsilon(2e-4));
}

TEST_CASE("paired t-test on hand data") {
  std::vector<double> b = {0.5, 0.5, 0.5, 0.5, 0.5};
  std::vector<double> a = {0.6, 0.8, 0.3, 0.9, 0.7};
  // differences: 0.1, 0.3, -0.2, 0.4, 0.2 -> mean 0.16, sd 0.230217...
  TTestResult r = paired_t_test(a, b);
  const double want_t = 0.16 / (std::sqrt(0.053) / std::sqrt(5.0));
  CHECK(r.t == doctest::Approx(want_t).epsilon(1e-12));
  CHECK(r.dof == 4);
  CHECK_FALSE(r.degenerate);
  CHECK(r.p == doctest::Approx(1.0 - t_cdf_quadrature(want_t, 4)).epsilon(1e-8));
  CHECK(r.p > 0.05);
  CHECK_FALSE(r.significant);

  // Antisymmetry; the two one-sided p values add to one.
  TTestResult rev = paired_t_test(b, a);
  CHECK(rev.t == doctest::Approx(-r.t).epsilon(1e-12));
  CHECK(r.p + rev.p == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("paired t-test degenerate differences") {
  // Dyadic values keep x + 1.0 exact, so the differences are exactly equal.
  std::vector<double> base = {0.25, 0.5, 0.75, 1.0};
  TTestResult equal = paired_t_test(base, base);
  CHECK(equal.degenerate);
  CHECK(equal.t == 0.0);
  CHECK(equal.p == 0.5);
  CHECK_FALSE(equal.significant);

  std::vector<double> shifted = base;
  for (double& x : shifted) x += 1.0;
  TTestResult up = paired_t_test(shifted, base);
  CHECK(up.degenerate);
  CHECK(up.significant);
  CHECK(up.p == 0.0);
  CHECK(std::isinf(up.t));

  TTestResult down = paired_t_test(base, shifted);
  CHECK(down.degenerate);
  CHECK_FALSE(down.significant);
  CHECK(down.p == 1.0);

  CHECK_THROWS_AS(paired_t_test({1.0}, {2.0}), std::invalid_argument);
  CHECK_THROWS_AS(paired_t_test({1.0, 2.0}, {2.0}), std::invalid_argument);
}

TEST_CASE("paired t-test on a clearly better system") {
  std::vector<double> a, b;
  for (int i = 0; i < 20; ++i) {
    b.push_back(0.4 + 0.01 * (i % 5));
    a.push_back(b.back() + 0.05 + 0.001 * (i % 3));
  }
  TTestResult r = paired_t_test(a, b);
  CHECK(r.p < 0.05);
  CHECK(r.significant);
  CHECK(r.p >= 0.0);
  CHECK(r.p <= 1.0);
}

TEST_CASE("evaluating identical outputs scores one everywhere") {
  std::vector<SegmentedDocument> refs(2);
  refs[0].id = "d1";
  refs[0].segments = {{"the", "quick", "fox"}, {"ran", "away", "."}};
  refs[0].summary = {"the", "quick", "fox"};
  refs[1].id = "d2";
  refs[1].segments = {{"rain", "fell", "hard"}, {"rivers", "rose", "."}};
  refs[1].summary = {"rivers", "rose", "."};

  std::vector<DocumentSummary> outs(2);
  outs[0].id = "d2";  // order must not matter
  outs[0].extractive = {join_tokens(refs[1].summary)};
  outs[0].abstractive = join_tokens(refs[1].summary);
  outs[1].id = "d1";
  outs[1].extractive = {join_tokens(refs[0].summary)};
  outs[1].abstractive = join_tokens(refs[0].summary);

  EvalReport rep = evaluate_run(outs, refs);
  CHECK(rep.ids == std::vector<std::string>{"d1", "d2"});
  CHECK(rep.extractive_mean.rouge1 == doctest::Approx(1.0));
  CHECK(rep.extractive_mean.rouge2 == doctest::Approx(1.0));
  CHECK(rep.extractive_mean.rougeL == doctest::Approx(1.0));
  CHECK(rep.abstractive_mean.rougeL == doctest::Approx(1.0));
}

TEST_CASE("corpus mean is the arithmetic mean of per-document scores") {
  std::vector<SegmentedDocument> refs(2);
  refs[0].id = "a";
  refs[0].segments = {{"x", "y"}};
  refs[0].summary = {"x", "y"};
  refs[1].id = "b";
  refs[1].segments = {{"p", "q", "r", "s", "t"}};
  refs[1].summary = {"p", "q", "r", "s", "t"};

  std::vector<DocumentSummary> outs(2);
  outs[0].id = "a";
  outs[0].abstractive = "x u v";  // unigram P 1/3, R 1/2 -> F1 0.4
  outs[0].extractive = {outs[0].abstractive};
  outs[1].id = "b";
  outs[1].abstractive = "p q r u v";  // P 3/5, R 3/5 -> F1 0.6
  outs[1].extractive = {"p q", "r u v"};  // same tokens across two segments

  EvalReport rep = evaluate_run(outs, refs);
  CHECK(rep.abstractive[0].rouge1 == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(rep.abstractive[1].rouge1 == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(rep.abstractive_mean.rouge1 == doctest::Approx(0.5).epsilon(1e-12));
  // Segment boundaries are invisible to the metric.
  CHECK(rep.extractive[1].rouge1 == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("id misalignment is rejected by name") {
  std::vector<SegmentedDocument> refs(2);
  refs[0].id = "d1";
  refs[0].segments = {{"a"}};
  refs[0].summary = {"a"};
  refs[1].id = "d2";
  refs[1].segments = {{"b"}};
  refs[1].summary = {"b"};

  std::vector<DocumentSummary> outs(2);
  outs[0].id = "d1";
  outs[1].id = "d3";
  try {
    evaluate_run(outs, refs);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("d2") != std::string::npos);
    CHECK(msg.find("d3") != std::string::npos);
  }

  outs[1].id = "d1";  // duplicate
  CHECK_THROWS_AS(evaluate_run(outs, refs), DataError);
}

TEST_CASE("summaries file round trip") {
  std::vector<DocumentSummary> s(2);
  s[0].id = "a";
  s[0].extractive = {"tok ens", "more"};
  s[0].abstractive = "out put";
  s[0].mask_segments = {2};
  s[0].scores = {0.25, 0.5, 0.125};
  s[1].id = "b";

  const std::string path = "summaries_roundtrip.jsonl";
  save_summaries(path, s, R"({"seed":"7"})");
  std::vector<DocumentSummary> back = load_summaries(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == "a");
  CHECK(back[0].extractive == s[0].extractive);
  CHECK(back[0].abstractive == s[0].abstractive);
  CHECK(back[0].mask_segments == s[0].mask_segments);
  CHECK(back[0].scores == s[0].scores);
  CHECK(back[1].id == "b");
  CHECK(back[1].abstractive.empty());
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_summaries(path), DataError);
}

TEST_CASE("segment extraction helper") {
  SegmentedDocument doc;
  doc.id = "d";
  doc.segments = {{"a", "b"}, {"c"}, {"d", "e"}};
  CHECK(extract_segments(doc, {0, 2}) == std::vector<std::string>{"a b", "d e"});
  CHECK(extract_segments(doc, {}).empty());
  CHECK_THROWS_AS(extract_segments(doc, {3}), std::invalid_argument);
  CHECK(split_tokens(" a  b ") == std::vector<std::string>{"a", "b"});
  CHECK(join_tokens({"a", "b"}) == "a b");
  CHECK(join_tokens({}).empty());
}

TEST_CASE("mask source sweep is deterministic and labelled") {
  SynthConfig sc;
  sc.docs = 4;
  sc.segments = 3;
  sc.salient = 1;
  sc.vocab_tokens = 8;
  sc.min_segment_tokens = 2;
  sc.max_segment_tokens = 3;
  sc.seed = 31;
  SyntheticCorpus corpus = generate_synthetic_corpus(sc);
  Vocabulary vocab = Vocabulary::build(corpus.docs, 1, 1 << 20);
  ExtAbsModel model(sweep_model_config(vocab.size()));

  std::vector<OracleAnnotation> anns;
  for (std::size_t i = 0; i < corpus.docs.size(); ++i) {
    OracleAnnotation a;
    a.selected = corpus.salient[i];
    a.labels.assign(corpus.docs[i].segments.size(), 0);
    for (int s : a.selected) a.labels[s] = 1;
    anns.push_back(std::move(a));
  }

  InferParams params;
  params.top_k = 1;
  params.top_z = 1;
  params.beam.beam_size = 2;
  params.beam.max_tokens = 8;

  const std::vector<MaskSource> sources = {MaskSource::none, MaskSource::oracle,
                                           MaskSource::top_z};
  SweepResult sweep = mask_source_sweep(model, vocab, corpus.docs, &anns, sources, params);
  REQUIRE(sweep.reports.size() == 3);
  REQUIRE(sweep.outputs.size() == 3);
  CHECK(sweep.reports[0].mask_source == "none");
  CHECK(sweep.reports[1].mask_source == "oracle");
  CHECK(sweep.reports[2].mask_source == "top-z");
  CHECK(sweep.reports[0].top_k == 1);
  for (const auto& outputs : sweep.outputs) CHECK(outputs.size() == corpus.docs.size());
  for (const DocumentSummary& s : sweep.outputs[0]) CHECK(s.mask_segments.empty());

  SweepResult again = mask_source_sweep(model, vocab, corpus.docs, &anns, sources, params);
  for (int r = 0; r < 3; ++r) {
    CHECK(sweep.reports[r].abstractive_mean.rougeL == again.reports[r].abstractive_mean.rougeL);
    for (std::size_t i = 0; i < corpus.docs.size(); ++i) {
      CHECK(sweep.outputs[r][i].abstractive == again.outputs[r][i].abstractive);
    }
  }

  // The vanilla report matches summarizing document by document.
  for (std::size_t i = 0; i < corpus.docs.size(); ++i) {
    SummaryResult one =
        summarize_document(model, vocab, corpus.docs[i], MaskSource::none, nullptr, params);
    CHECK(join_tokens(one.abstractive) == sweep.outputs[0][i].abstractive);
    RougeScore score = rouge_all(one.abstractive, corpus.docs[i].summary);
    CHECK(score.rougeL == doctest::Approx(sweep.reports[0].abstractive[i].rougeL));
  }

  // When the annotated selection is exactly the predicted top-z set, the
  // oracle and top-z decodes coincide.
  std::vector<OracleAnnotation> mirrored;
  for (std::size_t i = 0; i < corpus.docs.size(); ++i) {
    OracleAnnotation a;
    a.selected = sweep.outputs[2][i].mask_segments;
    a.labels.assign(corpus.docs[i].segments.size(), 0);
    for (int s : a.selected) a.labels[s] = 1;
    mirrored.push_back(std::move(a));
  }
  SweepResult echo =
      mask_source_sweep(model, vocab, corpus.docs, &mirrored, {MaskSource::oracle}, params);
  for (std::size_t i = 0; i < corpus.docs.size(); ++i) {
    CHECK(echo.outputs[0][i].abstractive == sweep.outputs[2][i].abstractive);
  }

  CHECK_THROWS_AS(
      mask_source_sweep(model, vocab, corpus.docs, nullptr, {MaskSource::oracle}, params),
      std::invalid_argument);
}

}  // TEST_SUITE
