#include "extabs/oracle.hpp"

#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "extabs/errors.hpp"

using namespace extabs;

namespace {

SegmentedDocument doc_from(std::string id, std::vector<std::vector<std::string>> segments,
                           std::vector<std::string> summary) {
  SegmentedDocument d;
  d.id = std::move(id);
  d.segments = std::move(segments);
  d.summary = std::move(summary);
  return d;
}

}  // namespace

TEST_SUITE("oracle") {

TEST_CASE("greedy stops when duplicates add nothing") {
  // s0 and s2 are identical; after [s0, s1] covers the reference exactly,
  // adding s2 only hurts precision.
  SegmentedDocument doc =
      doc_from("g1", {{"a", "b"}, {"c", "d"}, {"a", "b"}}, {"a", "b", "c", "d"});
  GreedyOptions opt;
  opt.budget = 3;
  OracleAnnotation a = greedy_select(doc, opt);
  CHECK(a.selected == std::vector<int>{0, 1});
  CHECK(a.labels == std::vector<int>{1, 1, 0});
}

TEST_CASE("equal candidates tie to the lower index") {
  SegmentedDocument doc = doc_from("g2", {{"a", "b"}, {"a", "b"}}, {"a", "b"});
  GreedyOptions opt;
  opt.budget = 2;
  OracleAnnotation a = greedy_select(doc, opt);
  CHECK(a.selected == std::vector<int>{0});
}

TEST_CASE("first-improve and best-improve can differ") {
  SegmentedDocument doc = doc_from("g3", {{"a", "c"}, {"c", "d"}}, {"c", "d"});
  GreedyOptions best;
  best.budget = 2;
  best.strategy = OracleStrategy::best_improve;
  CHECK(greedy_select(doc, best).selected == std::vector<int>{1});

  GreedyOptions first;
  first.budget = 2;
  first.strategy = OracleStrategy::first_improve;
  // s0 is the first strict improvement over the empty selection; s1 still
  // improves on top of it.
  CHECK(greedy_select(doc, first).selected == std::vector<int>{0, 1});
}

TEST_CASE("disjoint reference selects nothing") {
  SegmentedDocument doc = doc_from("g4", {{"a", "b"}, {"c"}}, {"x", "y"});
  GreedyOptions opt;
  OracleAnnotation a = greedy_select(doc, opt);
  CHECK(a.selected.empty());
  CHECK(a.labels == std::vector<int>{0, 0});
}

TEST_CASE("budget caps the selection") {
  SegmentedDocument doc =
      doc_from("g5", {{"a"}, {"b"}, {"c"}, {"d"}}, {"a", "b", "c", "d"});
  GreedyOptions opt;
  opt.budget = 2;
  OracleAnnotation a = greedy_select(doc, opt);
  CHECK(a.selected.size() == 2);
  CHECK_THROWS_AS((greedy_select(doc, GreedyOptions{0, {}, OracleStrategy::best_improve})),
                  std::invalid_argument);
}

TEST_CASE("first best-improve pick maximizes the objective alone") {
  SynthConfig cfg;
  cfg.docs = 20;
  cfg.seed = 91;
  SyntheticCorpus corpus = generate_synthetic_corpus(cfg);
  GreedyOptions opt;
  opt.budget = 1;
  for (const auto& doc : corpus.docs) {
    OracleAnnotation a = greedy_select(doc, opt);
    REQUIRE(a.selected.size() == 1);
    const double chosen = opt.objective(doc.segments[a.selected[0]], doc.summary);
    for (std::size_t s = 0; s < doc.segments.size(); ++s) {
      CHECK(opt.objective(doc.segments[s], doc.summary) <= chosen + 1e-12);
    }
  }
}

TEST_CASE("greedy recovers planted salient segments") {
  SynthConfig cfg;
  cfg.docs = 40;
  cfg.seed = 1234;
  SyntheticCorpus corpus = generate_synthetic_corpus(cfg);
  GreedyOptions opt;
  opt.budget = 5;
  int exact = 0;
  for (std::size_t d = 0; d < corpus.docs.size(); ++d) {
    if (greedy_select(corpus.docs[d], opt).selected == corpus.salient[d]) ++exact;
  }
  CHECK(exact >= 38);  // >= 95%
}

TEST_CASE("segment masks cover exactly the selected spans") {
  SegmentedDocument doc = doc_from("m1", {{"a", "b"}, {"c"}, {"d", "e", "f"}}, {});
  SaliencyMask mask = segments_to_mask(doc, {0, 2});
  CHECK(mask.bits == std::vector<std::uint8_t>{1, 1, 0, 1, 1, 1});
  CHECK(mask.count() == 5);
  CHECK_THROWS_AS(segments_to_mask(doc, {3}), DataError);
}

TEST_CASE("empty selections fall back to a document prefix") {
  SegmentedDocument doc = doc_from("m2", {{"a", "b"}, {"c"}, {"d"}}, {"x"});
  OracleAnnotation empty;
  empty.labels = {0, 0, 0};
  SaliencyMask mask = make_oracle_mask(doc, empty, 2);
  CHECK(mask.bits == std::vector<std::uint8_t>{1, 1, 1, 0});
  // budget larger than the document keeps every segment
  CHECK(make_oracle_mask(doc, empty, 8).count() == 4);
}

TEST_CASE("annotation sidecar round trip") {
  SegmentedDocument a = doc_from("a", {{"x"}, {"y"}}, {"x"});
  SegmentedDocument b = doc_from("b", {{"p", "q"}}, {"p"});
  GreedyOptions opt;
  std::vector<OracleAnnotation> annots = {greedy_select(a, opt), greedy_select(b, opt)};
  auto path = std::filesystem::temp_directory_path() / "extabs_annot_test.jsonl";
  save_annotations(path.string(), {a, b}, annots, R"({"budget": 8})");
  auto loaded = load_annotations(path.string(), {a, b});
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].selected == annots[0].selected);
  CHECK(loaded[0].labels == annots[0].labels);
  CHECK(loaded[1].selected == annots[1].selected);

  // order-insensitive alignment by id
  auto flipped = load_annotations(path.string(), {b, a});
  CHECK(flipped[0].selected == annots[1].selected);

  // missing document
  CHECK_THROWS_AS(load_annotations(path.string(), {a}), DataError);
  SegmentedDocument c = doc_from("c", {{"z"}}, {});
  CHECK_THROWS_AS(load_annotations(path.string(), {a, b, c}), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("inconsistent sidecar records are rejected") {
  SegmentedDocument a = doc_from("a", {{"x"}, {"y"}}, {"x"});
  auto path = std::filesystem::temp_directory_path() / "extabs_annot_bad.jsonl";
  {
    std::ofstream out(path);
    out << R"({"id": "a", "selected": [1], "labels": [1, 0]})" << "\n";
  }
  CHECK_THROWS_AS(load_annotations(path.string(), {a}), DataError);
  {
    std::ofstream out(path);
    out << R"({"id": "a", "selected": [0], "labels": [1]})" << "\n";
  }
  CHECK_THROWS_AS(load_annotations(path.string(), {a}), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("strategy names parse and print") {
  CHECK(parse_oracle_strategy("best-improve") == OracleStrategy::best_improve);
  CHECK(parse_oracle_strategy("first-improve") == OracleStrategy::first_improve);
  CHECK(to_string(OracleStrategy::first_improve) == "first-improve");
  CHECK_THROWS_AS(parse_oracle_strategy("greedy"), UsageError);
}

}  // TEST_SUITE
