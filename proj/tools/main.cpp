#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "i2l/error.hpp"
#include "pipeline.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interpretable imitation learning pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", i2l::cli::kToolVersion);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "i2l_out";
  const std::vector<std::string> stages{"simulate", "features", "train", "evaluate", "report"};
  const std::vector<std::string> help{"run the target policy and write JSON-lines episode logs",
                                      "build the rebalanced, split feature dataset",
                                      "grow T0, prune it and write trees and the pruning curve",
                                      "measure held-out accuracy and deployment MTBF per tree and topology",
                                      "print and store a summary of the evaluation"};
  for (std::size_t i = 0; i < stages.size(); ++i) {
    CLI::App* sub = app.add_subcommand(stages[i], help[i]);
    sub->add_option("--config", config_path, "experiment config JSON")->required();
    sub->add_option("--seed", seed, "overrides the config seed");
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    i2l::cli::Context ctx{i2l::load_config(config_path), out_dir};
    if (seed) ctx.config.seed = *seed;
    std::filesystem::create_directories(ctx.out);
    const std::string stage = app.get_subcommands().front()->get_name();
    if (stage == "simulate") i2l::cli::cmd_simulate(ctx);
    if (stage == "features") i2l::cli::cmd_features(ctx);
    if (stage == "train") i2l::cli::cmd_train(ctx);
    if (stage == "evaluate") i2l::cli::cmd_evaluate(ctx);
    if (stage == "report") i2l::cli::cmd_report(ctx, std::cout);
  } catch (const i2l::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
