#pragma once

#include "CLI11.hpp"

#include "vidyn/cli/app.hpp"

namespace vidyn {

// argv-level entry point; returns the process exit code. Failures print one
// machine-readable JSON line to stderr.
inline int run_cli(int argc, const char* const* argv) {
  CLI::App app{"desk-scale visual-inertial-dynamics odometry toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_override, experiment;
  std::vector<std::string> overrides;
  std::optional<uint64_t> seed;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", config_path, "experiment config JSON");
    if (needs_config) c->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--out", out_override, "override the output directory");
    sub->add_option("--set", overrides,
                    "override a config entry, e.g. --set trajectory.period=4.0");
  };

  auto* simulate = app.add_subcommand("simulate", "generate a synthetic sensor dataset");
  auto* train = app.add_subcommand("train", "train the residual-force model");
  auto* run = app.add_subcommand("run", "run the estimator modes on a dataset");
  auto* evaluate = app.add_subcommand("evaluate", "score runs against ground truth");
  auto* repro = app.add_subcommand("repro", "end-to-end pipeline for a named experiment");
  for (auto* sub : {simulate, train, run, evaluate}) add_common(sub, true);
  repro->add_option("name", experiment, "experiment name")->required();
  repro->add_option("--seed", seed, "override the experiment seed");
  repro->add_option("--out", out_override, "output root directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    if (cmd == "repro") {
      std::cout << cmd_repro(experiment, out_override, seed) << "\n";
      return 0;
    }
    const RunConfig cfg = load_config(config_path, overrides, seed, out_override);
    if (cmd == "simulate") {
      std::cout << cmd_simulate(cfg) << "\n";
    } else if (cmd == "train") {
      std::cout << cmd_train(cfg) << "\n";
    } else if (cmd == "run") {
      for (const auto& d : cmd_run(cfg)) std::cout << d << "\n";
    } else if (cmd == "evaluate") {
      std::cout << cmd_evaluate(cfg) << "\n";
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", {{"command", cmd}, {"message", e.what()}}}}.dump()
              << "\n";
    return 1;
  }
}

}  // namespace vidyn
