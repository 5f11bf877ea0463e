// SPDX-License-Identifier: Apache-2.0
//
// dpa: data generation, cold-start SFT, GRPO / DPA-GRPO training,
// evaluation and run comparison.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dpa/pipeline.hpp"

namespace {

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--set", o.overrides, "override a config value, e.g. --set rl.lr=0.05")
      ->take_all();
  cmd->add_option("-o,--out", o.out, "output run directory (defaults to io.out_dir)");
}

dpa::RunConfig resolve(const CommonOptions& o) {
  std::optional<dpa::fs::path> file;
  if (!o.config.empty()) file = o.config;
  return dpa::load_run_config(file, o.overrides);
}

dpa::fs::path out_dir(const CommonOptions& o, const dpa::RunConfig& cfg) {
  return o.out.empty() ? dpa::fs::path(cfg.out_dir) : dpa::fs::path(o.out);
}

std::optional<dpa::fs::path> opt_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return dpa::fs::path(s);
}

void emit(const dpa::CommandOutput& r) {
  if (!r.warning.empty()) std::cerr << r.warning << '\n';
  std::cout << r.message << std::flush;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage multi-answer RL fine-tuning on a synthetic benchmark"};
  app.require_subcommand(1);

  CommonOptions gen_o, sft_o, train_o, eval_o;
  std::string sft_data, sft_init, train_data, train_init, eval_ckpt, eval_test, run_a, run_b, report_out;
  bool allow_raw = false;

  auto* gen = app.add_subcommand("gen-data", "generate train/test/explore splits");
  add_common(gen, gen_o);

  auto* sft = app.add_subcommand("sft", "cold-start supervised fine-tuning");
  add_common(sft, sft_o);
  sft->add_option("-d,--data", sft_data, "dataset directory from gen-data")->required();
  sft->add_option("--init", sft_init, "resume from a checkpoint");

  auto* train = app.add_subcommand("train", "GRPO training from a post-SFT checkpoint");
  add_common(train, train_o);
  train->add_option("-d,--data", train_data, "dataset directory from gen-data")->required();
  train->add_option("--init", train_init, "post-SFT checkpoint");
  train->add_flag("--allow-raw-init", allow_raw, "permit RL without a cold start");

  auto* eval = app.add_subcommand("eval", "greedy evaluation of a checkpoint");
  add_common(eval, eval_o);
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--test", eval_test, "labelled dataset file (defaults to eval.test_path)");

  auto* report = app.add_subcommand("report", "compare two eval runs");
  report->add_option("run_a", run_a, "baseline eval directory")->required();
  report->add_option("run_b", run_b, "candidate eval directory")->required();
  report->add_option("-o,--out", report_out, "also write compare.txt/compare.json here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) {
      const auto cfg = resolve(gen_o);
      emit(dpa::cmd_gen_data(cfg, out_dir(gen_o, cfg)));
    } else if (*sft) {
      const auto cfg = resolve(sft_o);
      emit(dpa::cmd_sft(cfg, sft_data, out_dir(sft_o, cfg), opt_path(sft_init)));
    } else if (*train) {
      const auto cfg = resolve(train_o);
      emit(dpa::cmd_train(cfg, train_data, out_dir(train_o, cfg), opt_path(train_init), allow_raw));
    } else if (*eval) {
      const auto cfg = resolve(eval_o);
      const std::string test = eval_test.empty() ? cfg.test_path : eval_test;
      if (test.empty()) throw dpa::ConfigError("no test file given (use --test or eval.test_path)");
      emit(dpa::cmd_eval(cfg, eval_ckpt, test, out_dir(eval_o, cfg)));
    } else if (*report) {
      emit(dpa::cmd_report(run_a, run_b, opt_path(report_out)));
    }
  } catch (const dpa::Error& e) {
    std::cerr << "error[" << dpa::to_string(e.kind()) << "]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
