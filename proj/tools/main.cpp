#include <cstdlib>
#include <iostream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "extabs/errors.hpp"
#include "extabs/pipeline.hpp"
#include "extabs/runconfig.hpp"

namespace {

// Every stage accepts --config and repeatable --set key=value overrides;
// the dedicated flags below are sugar for the most common keys and are
// applied after --set, all through the same RunConfig::set path.
struct StageArgs {
  std::string config;
  std::vector<std::string> sets;

  struct Flag {
    std::string key;
    std::string value;
    CLI::Option* opt = nullptr;
  };
  std::vector<std::unique_ptr<Flag>> flags;
};

void add_common(CLI::App* sub, StageArgs& args) {
  sub->add_option("--config", args.config, "flat key = value configuration file");
  sub->add_option("--set", args.sets, "override one setting, key=value (repeatable)");
}

void add_key_flag(CLI::App* sub, StageArgs& args, const std::string& flag, const std::string& key,
                  const std::string& help) {
  auto bound = std::make_unique<StageArgs::Flag>();
  bound->key = key;
  bound->opt = sub->add_option(flag, bound->value, help);
  args.flags.push_back(std::move(bound));
}

std::vector<std::pair<std::string, std::string>> overrides(const StageArgs& args) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const std::string& kv : args.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw extabs::UsageError("--set expects key=value, got '" + kv + "'");
    }
    out.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& flag : args.flags) {
    if (flag->opt->count() > 0) out.emplace_back(flag->key, flag->value);
  }
  return out;
}

extabs::RunConfig resolve(const StageArgs& args) {
  return extabs::load_run_config(args.config, overrides(args));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"extract-and-abstract summarization pipeline"};
  app.require_subcommand(1);

  StageArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic marker corpus");
  add_common(synth, synth_args);
  add_key_flag(synth, synth_args, "--docs", "synth_docs", "number of documents");
  add_key_flag(synth, synth_args, "--segments", "synth_segments", "segments per document");
  add_key_flag(synth, synth_args, "--salient", "synth_salient", "planted salient segments");
  add_key_flag(synth, synth_args, "--seed", "seed", "random seed");
  add_key_flag(synth, synth_args, "--out", "out", "corpus JSONL to write");

  StageArgs preprocess_args;
  CLI::App* preprocess =
      app.add_subcommand("preprocess", "tokenize and truncate a raw JSONL corpus");
  add_common(preprocess, preprocess_args);
  add_key_flag(preprocess, preprocess_args, "--corpus", "corpus", "raw corpus JSONL");
  add_key_flag(preprocess, preprocess_args, "--out", "out", "processed corpus JSONL to write");

  StageArgs oracle_args;
  CLI::App* oracle = app.add_subcommand("oracle", "compute greedy extractive annotations");
  add_common(oracle, oracle_args);
  add_key_flag(oracle, oracle_args, "--corpus", "corpus", "corpus JSONL");
  add_key_flag(oracle, oracle_args, "--budget", "max_oracle_selections",
               "selection budget per document");
  add_key_flag(oracle, oracle_args, "--out", "out", "annotation JSONL to write");

  StageArgs train_args;
  CLI::App* train = app.add_subcommand("train", "train a model on an annotated corpus");
  add_common(train, train_args);
  add_key_flag(train, train_args, "--corpus", "corpus", "training corpus JSONL");
  add_key_flag(train, train_args, "--val", "val", "validation corpus JSONL");
  add_key_flag(train, train_args, "--annotations", "annotations",
               "oracle annotation JSONL (computed in process when omitted)");
  add_key_flag(train, train_args, "--epochs", "epochs", "training epochs");
  add_key_flag(train, train_args, "--seed", "seed", "random seed");
  add_key_flag(train, train_args, "--out", "out", "output directory for best.ckpt and history");

  StageArgs summarize_args;
  CLI::App* summarize = app.add_subcommand("summarize", "decode summaries with a checkpoint");
  add_common(summarize, summarize_args);
  add_key_flag(summarize, summarize_args, "--ckpt", "ckpt", "checkpoint file");
  add_key_flag(summarize, summarize_args, "--corpus", "corpus", "corpus JSONL");
  add_key_flag(summarize, summarize_args, "--annotations", "annotations",
               "oracle annotation JSONL (for --mask-source oracle)");
  add_key_flag(summarize, summarize_args, "--top-k", "top_k", "extractive summary width");
  add_key_flag(summarize, summarize_args, "--top-z", "top_z", "predicted mask width");
  add_key_flag(summarize, summarize_args, "--mask-source", "mask_source",
               "none, oracle, or top-z");
  add_key_flag(summarize, summarize_args, "--beam", "beam_size", "beam width");
  add_key_flag(summarize, summarize_args, "--out", "out", "summaries JSONL to write");

  StageArgs eval_args;
  std::string eval_a, eval_b;
  CLI::App* eval = app.add_subcommand("eval", "score two summary runs and test significance");
  add_common(eval, eval_args);
  add_key_flag(eval, eval_args, "--corpus", "corpus", "reference corpus JSONL");
  eval->add_option("--a", eval_a, "summaries JSONL, system A")->required();
  eval->add_option("--b", eval_b, "summaries JSONL, system B")->required();
  add_key_flag(eval, eval_args, "--out", "out", "JSON report to write");

  StageArgs sweep_args;
  CLI::App* sweep = app.add_subcommand("sweep", "compare the none / oracle / top-z mask sources");
  add_common(sweep, sweep_args);
  add_key_flag(sweep, sweep_args, "--ckpt", "ckpt", "checkpoint file");
  add_key_flag(sweep, sweep_args, "--corpus", "corpus", "corpus JSONL");
  add_key_flag(sweep, sweep_args, "--annotations", "annotations",
               "oracle annotation JSONL (computed in process when omitted)");
  add_key_flag(sweep, sweep_args, "--top-k", "top_k", "extractive summary width");
  add_key_flag(sweep, sweep_args, "--top-z", "top_z", "predicted mask width");
  add_key_flag(sweep, sweep_args, "--out", "out", "JSON report to write");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  // EXTABS_LOG=0 silences progress; artifacts and the completion note are
  // unaffected.
  const char* log_env = std::getenv("EXTABS_LOG");
  std::ostream* log =
      (log_env != nullptr && std::string(log_env) == "0") ? nullptr : &std::cerr;

  try {
    std::string note;
    if (app.got_subcommand(synth)) {
      note = extabs::run_synth(resolve(synth_args), log);
    } else if (app.got_subcommand(preprocess)) {
      note = extabs::run_preprocess(resolve(preprocess_args), log);
    } else if (app.got_subcommand(oracle)) {
      note = extabs::run_oracle(resolve(oracle_args), log);
    } else if (app.got_subcommand(train)) {
      note = extabs::run_train(resolve(train_args), log);
    } else if (app.got_subcommand(summarize)) {
      note = extabs::run_summarize(resolve(summarize_args), log);
    } else if (app.got_subcommand(eval)) {
      note = extabs::run_eval(resolve(eval_args), eval_a, eval_b, log);
    } else {
      note = extabs::run_sweep(resolve(sweep_args), log);
    }
    std::cout << note << "\n";
    return 0;
  } catch (const extabs::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const extabs::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const extabs::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
