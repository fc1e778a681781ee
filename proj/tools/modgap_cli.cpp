// Copyright 2026 The modgap Authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <fmt/format.h>

#include <iostream>

#include "modgap/config.hpp"
#include "modgap/eval_harness.hpp"
#include "modgap/runner.hpp"

namespace {

modgap::Config build_config(const std::string& path, const std::vector<std::string>& overrides) {
  auto c = path.empty() ? modgap::Config::parse("") : modgap::Config::load(path);
  for (const auto& o : overrides) c.apply_override(o);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Modality-gap laboratory: paired-prompt RL, contrastive self-distillation and gap diagnostics"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> config_paths;
  std::vector<std::string> overrides;
  std::string compare_out;
  bool quiet = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--set", overrides, "Override a config key (key=value)")->take_all();
    sub->add_flag("-q,--quiet", quiet, "Suppress progress output");
  };

  auto* train = app.add_subcommand("train", "Train one strategy and export its gap trajectory");
  train->add_option("--config", config_path, "Config file")->check(CLI::ExistingFile);
  add_common(train);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint or a response-record file");
  eval->add_option("--config", config_path, "Config file")->check(CLI::ExistingFile);
  add_common(eval);

  auto* compare = app.add_subcommand("compare", "Train or load several strategies and tabulate them");
  compare->add_option("--config", config_paths, "Config file(s); one file may list compare.strategies")
      ->check(CLI::ExistingFile);
  compare->add_option("--out", compare_out, "Comparison CSV (default <run.output_dir>/compare.csv)");
  add_common(compare);

  auto* gen = app.add_subcommand("gen-data", "Export the train and test splits as JSONL");
  gen->add_option("--config", config_path, "Config file")->check(CLI::ExistingFile);
  add_common(gen);

  CLI11_PARSE(app, argc, argv);

  try {
    std::ostream* log = quiet ? nullptr : &std::cerr;
    if (train->parsed()) {
      const auto m = modgap::run_train(build_config(config_path, overrides), log);
      std::cout << fmt::format("status {} gen_batches {} steps {}\n", m.status, m.gen_batches, m.steps);
      if (m.final_metrics) {
        const std::vector<modgap::MetricsRow> rows = {{"final", *m.final_metrics}};
        std::cout << modgap::format_metrics_table(rows);
      }
    } else if (eval->parsed()) {
      modgap::run_eval(build_config(config_path, overrides), std::cout);
    } else if (compare->parsed()) {
      std::vector<modgap::Config> configs;
      for (const auto& p : config_paths) configs.push_back(build_config(p, overrides));
      if (configs.size() == 1) configs = modgap::expand_compare(configs.front());
      if (configs.empty()) configs = modgap::expand_compare(build_config("", overrides));
      std::string out = compare_out;
      if (out.empty()) {
        const auto first = configs.empty() ? modgap::Config::parse("") : configs.front();
        out = first.get_string("compare.output", "");
        if (out.empty()) {
          const auto e = modgap::experiment_from(first);
          out = (e.output_dir.parent_path() / "compare.csv").string();
        }
      }
      const auto rows = modgap::run_compare(configs, out, log);
      std::cout << modgap::format_metrics_table(rows);
    } else if (gen->parsed()) {
      modgap::run_gen_data(build_config(config_path, overrides), log);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
