#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "extabs/errors.hpp"
#include "extabs/eval.hpp"
#include "extabs/runconfig.hpp"
#include "extabs/textproc.hpp"

using namespace extabs;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Runs the installed pipeline binary from inside `dir` so relative paths
// (and the paths echoed into artifacts) stay reproducible.
int run_cli(const fs::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && EXTABS_LOG=0 '" + EXTABS_CLI_PATH + "' " +
                          args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  if (status == -1 || !WIFEXITED(status)) return -1;
  return WEXITSTATUS(status);
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::path("cli_scratch") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out << text;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string first_line(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);
  return line;
}

// Small geometry shared by the subprocess cases; exercised through --config.
const char* tiny_config_text =
    "# model small enough for test-speed training\n"
    "d_model = 16\n"
    "n_heads = 2\n"
    "ffn_dim = 32\n"
    "max_input_tokens = 64\n"
    "max_target_tokens = 24\n"
    "\n"
    "epochs = 1\n"
    "synth_docs = 12\n"
    "synth_segments = 5\n"
    "synth_salient = 2\n";

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("defaults validate and round trip through config text") {
  RunConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(load_run_config("").to_json() == cfg.to_json());

  const fs::path dir = fresh_dir("roundtrip");
  cfg.set("learning_rate", "2.5e-4");
  cfg.set("synth_mark_salient", "false");
  cfg.set("corpus", "some/path.jsonl");
  write_file(dir / "echo.cfg", cfg.to_config_text());
  RunConfig back = load_run_config((dir / "echo.cfg").string());
  CHECK(back.to_json() == cfg.to_json());
}

TEST_CASE("set parses typed values and rejects garbage by key") {
  RunConfig cfg;
  cfg.set("d_model", "64");
  CHECK(cfg.d_model == 64);
  CHECK(cfg.get("d_model") == "64");
  cfg.set("learning_rate", "2.5e-4");
  CHECK(cfg.learning_rate == doctest::Approx(2.5e-4));
  CHECK(cfg.get("learning_rate") == "0.00025");
  cfg.set("seed", "123");
  CHECK(cfg.seed == 123);
  cfg.set("synth_mark_salient", "0");
  CHECK(cfg.synth_mark_salient == false);
  cfg.set("objective", "r1+rl");
  CHECK(cfg.objective == "r1+rl");

  CHECK_THROWS_AS(cfg.set("d_model", "sixty"), UsageError);
  CHECK_THROWS_AS(cfg.set("d_model", "64.5"), UsageError);
  CHECK_THROWS_AS(cfg.set("learning_rate", "nan"), UsageError);
  CHECK_THROWS_AS(cfg.set("learning_rate", "1e999"), UsageError);
  CHECK_THROWS_AS(cfg.set("seed", "-3"), UsageError);
  CHECK_THROWS_AS(cfg.set("synth_mark_salient", "maybe"), UsageError);
  try {
    cfg.set("not_a_key", "1");
    FAIL("expected UsageError");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("not_a_key") != std::string::npos);
  }
}

TEST_CASE("config file layers under command-line overrides") {
  const fs::path dir = fresh_dir("layers");
  write_file(dir / "run.cfg",
             "# comment line\n"
             "\n"
             "alpha = 10   # trailing comment\n"
             "beta=2\n"
             "  mask_source = oracle\n");
  RunConfig cfg = load_run_config((dir / "run.cfg").string(),
                                  {{"alpha", "1"}, {"top_k", "4"}, {"top_k", "5"}});
  CHECK(cfg.alpha == 1.0);       // flag beats file
  CHECK(cfg.beta == 2.0);        // file beats default
  CHECK(cfg.gamma == 0.0);       // default
  CHECK(cfg.top_k == 5);         // later override wins
  CHECK(cfg.mask_source == "oracle");

  write_file(dir / "bad_syntax.cfg", "alpha = 10\nno equals sign here\n");
  try {
    load_run_config((dir / "bad_syntax.cfg").string());
    FAIL("expected UsageError");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
  write_file(dir / "bad_key.cfg", "alphaa = 10\n");
  CHECK_THROWS_AS(load_run_config((dir / "bad_key.cfg").string()), UsageError);
  write_file(dir / "bad_value.cfg", "epochs = soon\n");
  CHECK_THROWS_AS(load_run_config((dir / "bad_value.cfg").string()), UsageError);
  write_file(dir / "bad_range.cfg", "alpha = -1\n");
  CHECK_THROWS_AS(load_run_config((dir / "bad_range.cfg").string()), UsageError);
  CHECK_THROWS_AS(load_run_config((dir / "missing.cfg").string()), DataError);
}

TEST_CASE("validate rejects inconsistent settings") {
  auto broken = [](const char* key, const char* value) {
    RunConfig cfg;
    cfg.set(key, value);
    cfg.validate();
  };
  CHECK_THROWS_AS(broken("d_model", "30"), UsageError);  // not a multiple of n_heads
  CHECK_THROWS_AS(broken("epochs", "0"), UsageError);
  CHECK_THROWS_AS(broken("top_k", "0"), UsageError);
  CHECK_THROWS_AS(broken("beam_size", "0"), UsageError);
  CHECK_THROWS_AS(broken("min_tokens", "-1"), UsageError);
  CHECK_THROWS_AS(broken("length_penalty", "-0.5"), UsageError);
  CHECK_THROWS_AS(broken("mask_source", "banana"), UsageError);
  CHECK_THROWS_AS(broken("abs_reduction", "median"), UsageError);
  CHECK_THROWS_AS(broken("oracle_strategy", "random"), UsageError);
  CHECK_THROWS_AS(broken("objective", "r9"), UsageError);
  CHECK_THROWS_AS(broken("synth_salient", "99"), UsageError);  // exceeds synth_segments
  CHECK_THROWS_AS(broken("vocab_min_freq", "0"), UsageError);
}

TEST_CASE("config views carry the shared seed and parsed enums") {
  RunConfig cfg;
  cfg.set("seed", "99");
  cfg.set("oracle_strategy", "first-improve");
  cfg.set("objective", "rl");
  cfg.set("max_oracle_selections", "3");
  CHECK(cfg.model_config(10).seed == 99);
  CHECK(cfg.model_config(10).vocab_size == 10);
  CHECK(cfg.train_config().seed == 99);
  CHECK(cfg.train_config().oracle_strategy == OracleStrategy::first_improve);
  CHECK(cfg.train_config().objective.wl == 1.0);
  CHECK(cfg.train_config().objective.w1 == 0.0);
  CHECK(cfg.synth_config().seed == 99);
  CHECK(cfg.greedy_options().budget == 3);
  CHECK(cfg.infer_params().beam.max_tokens == cfg.max_target_tokens);
  CHECK(cfg.corpus_limits().max_input_tokens == cfg.max_input_tokens);
}

TEST_CASE("exit codes distinguish usage, data, and numeric failures") {
  const fs::path dir = fresh_dir("exit_codes");
  write_file(dir / "tiny.cfg", tiny_config_text);

  CHECK(run_cli(dir, "--help") == 0);
  CHECK(run_cli(dir, "") == 1);       // a subcommand is required
  CHECK(run_cli(dir, "bogus") == 1);  // unknown subcommand
  CHECK(run_cli(dir, "synth --set not_a_key=1 --out x.jsonl") == 1);
  CHECK(run_cli(dir, "synth --set alpha=-1 --out x.jsonl") == 1);
  CHECK(run_cli(dir, "synth --config tiny.cfg") == 1);  // missing out
  CHECK(run_cli(dir, "oracle --corpus missing.jsonl --out y.jsonl") == 2);
  CHECK(run_cli(dir, "eval --corpus c.jsonl --a a.jsonl --out r.json") == 1);  // --b required

  REQUIRE(run_cli(dir, "synth --config tiny.cfg --seed 7 --out corpus.jsonl") == 0);
  // Overflowing step size drives the weights non-finite.
  CHECK(run_cli(dir, "train --config tiny.cfg --corpus corpus.jsonl --val corpus.jsonl "
                     "--out boom --set learning_rate=1e280") == 3);
}

TEST_CASE("pipeline subcommands produce aligned artifacts") {
  const fs::path dir = fresh_dir("pipeline");
  write_file(dir / "tiny.cfg", tiny_config_text);

  REQUIRE(run_cli(dir, "synth --config tiny.cfg --seed 7 --out corpus.jsonl") == 0);
  REQUIRE(run_cli(dir, "oracle --config tiny.cfg --corpus corpus.jsonl --out ann.jsonl") == 0);
  REQUIRE(run_cli(dir, "train --config tiny.cfg --corpus corpus.jsonl --val corpus.jsonl "
                       "--annotations ann.jsonl --out run") == 0);
  REQUIRE(run_cli(dir, "summarize --config tiny.cfg --ckpt run/best.ckpt --corpus corpus.jsonl "
                       "--top-k 2 --top-z 2 --out sum_topz.jsonl") == 0);
  REQUIRE(run_cli(dir, "summarize --config tiny.cfg --ckpt run/best.ckpt --corpus corpus.jsonl "
                       "--mask-source none --out sum_none.jsonl") == 0);
  REQUIRE(run_cli(dir, "summarize --config tiny.cfg --ckpt run/best.ckpt --corpus corpus.jsonl "
                       "--mask-source oracle --annotations ann.jsonl --out sum_oracle.jsonl") == 0);
  // the oracle source insists on annotations
  CHECK(run_cli(dir, "summarize --config tiny.cfg --ckpt run/best.ckpt --corpus corpus.jsonl "
                     "--mask-source oracle --out nope.jsonl") == 1);
  REQUIRE(run_cli(dir, "eval --config tiny.cfg --corpus corpus.jsonl --a sum_topz.jsonl "
                       "--b sum_none.jsonl --out report.json") == 0);
  REQUIRE(run_cli(dir, "sweep --config tiny.cfg --ckpt run/best.ckpt --corpus corpus.jsonl "
                       "--annotations ann.jsonl --out sweep.json") == 0);

  // Artifacts line up with the corpus and embed the resolved settings.
  const json corpus_meta = json::parse(first_line(dir / "corpus.jsonl"));
  CHECK(corpus_meta.at("_meta").at("seed") == 7);
  CHECK(corpus_meta.at("_meta").at("synth_docs") == 12);
  const json summary_meta = json::parse(first_line(dir / "sum_topz.jsonl"));
  CHECK(summary_meta.at("_meta").at("top_z") == 2);
  CHECK(summary_meta.at("_meta").at("ckpt") == "run/best.ckpt");

  std::vector<DocumentSummary> topz = load_summaries((dir / "sum_topz.jsonl").string());
  REQUIRE(topz.size() == 12);
  for (const DocumentSummary& s : topz) {
    CHECK(s.scores.size() == 5);
    CHECK(s.mask_segments.size() == 2);
    CHECK(s.extractive.size() == 2);
  }
  for (const DocumentSummary& s : load_summaries((dir / "sum_none.jsonl").string())) {
    CHECK(s.mask_segments.empty());
  }

  const json report = json::parse(read_file(dir / "report.json"));
  CHECK(report.at("n") == 12);
  const double p = report.at("tests_a_gt_b").at("rougeL").at("p").get<double>();
  CHECK(p >= 0.0);
  CHECK(p <= 1.0);
  CHECK(report.at("a").at("abstractive_mean").at("rougeL").is_number());

  const json sweep = json::parse(read_file(dir / "sweep.json"));
  REQUIRE(sweep.at("sources").size() == 3);
  CHECK(sweep.at("sources")[0].at("mask_source") == "none");
  CHECK(sweep.at("sources")[1].at("mask_source") == "oracle");
  CHECK(sweep.at("sources")[2].at("mask_source") == "top-z");
  CHECK(sweep.at("ordering").contains("oracle_minus_none_rougeL"));

  // history: one provenance line plus one record per epoch
  const std::string history = read_file(dir / "run" / "history.jsonl");
  CHECK(std::count(history.begin(), history.end(), '\n') == 2);
}

TEST_CASE("identical invocations reproduce artifacts byte for byte") {
  const fs::path a = fresh_dir("repro_a");
  const fs::path b = fresh_dir("repro_b");
  for (const fs::path& dir : {a, b}) {
    write_file(dir / "tiny.cfg", tiny_config_text);
    REQUIRE(run_cli(dir, "synth --config tiny.cfg --seed 11 --out corpus.jsonl") == 0);
    REQUIRE(run_cli(dir, "oracle --config tiny.cfg --corpus corpus.jsonl --out ann.jsonl") == 0);
    REQUIRE(run_cli(dir, "train --config tiny.cfg --corpus corpus.jsonl --val corpus.jsonl "
                         "--annotations ann.jsonl --out run") == 0);
    REQUIRE(run_cli(dir, "summarize --config tiny.cfg --ckpt run/best.ckpt --corpus corpus.jsonl "
                         "--out summaries.jsonl") == 0);
  }
  CHECK(read_file(a / "corpus.jsonl") == read_file(b / "corpus.jsonl"));
  CHECK(read_file(a / "ann.jsonl") == read_file(b / "ann.jsonl"));
  CHECK(read_file(a / "run" / "best.ckpt") == read_file(b / "run" / "best.ckpt"));
  CHECK(read_file(a / "run" / "history.jsonl") == read_file(b / "run" / "history.jsonl"));
  CHECK(read_file(a / "summaries.jsonl") == read_file(b / "summaries.jsonl"));
}

TEST_SUITE_END();
