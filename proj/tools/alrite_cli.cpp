#include "alrite/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

enum class Command { generate, sweep, fit, evaluate, select, ensemble, bounds, report };

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Twin-pipeline CATE estimation: sweeps, selection, ensembles and bound checks"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  int workers = 1;
  app.add_option("--config", config_path, "Experiment config (JSON)");
  app.add_option("--seed", seed, "Master seed, overrides the config");
  app.add_option("--out", out_dir, "Run directory, overrides the config");
  app.add_option("--workers", workers, "Concurrent sweep members")->check(CLI::PositiveNumber);

  Command command = Command::report;
  const std::pair<const char*, Command> subcommands[] = {
      {"generate", Command::generate}, {"sweep", Command::sweep},       {"fit", Command::fit},
      {"evaluate", Command::evaluate}, {"select", Command::select},     {"ensemble", Command::ensemble},
      {"bounds", Command::bounds},     {"report", Command::report}};
  const char* help[] = {"Write the dataset CSV and manifest",
                        "Train l0 + l1 pipelines and score every candidate",
                        "Fit one model with the fixed hyper-parameters",
                        "Evaluate the fitted model against an OLS T-learner",
                        "Pick the best candidate under each proxy",
                        "Top-K and softmax ensemble curves",
                        "PEHE bound reports for the fitted model",
                        "Summarize the run directory"};
  for (std::size_t k = 0; k < std::size(subcommands); ++k) {
    const Command c = subcommands[k].second;
    app.add_subcommand(subcommands[k].first, help[k])->callback([&command, c] { command = c; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  alrite::ExperimentConfig config;
  try {
    if (!config_path.empty()) {
      config = alrite::load_config(config_path);
    } else {
      alrite::validate(config);
    }
    if (seed) config.seed = *seed;
    if (!out_dir.empty()) config.output_dir = out_dir;
  } catch (const alrite::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  }

  const std::filesystem::path out = config.output_dir;
  try {
    switch (command) {
      case Command::generate: alrite::cmd_generate(config, out); break;
      case Command::sweep: alrite::cmd_sweep(config, out, workers); break;
      case Command::fit: alrite::cmd_fit(config, out); break;
      case Command::evaluate: alrite::cmd_evaluate(config, out); break;
      case Command::select: alrite::cmd_select(config, out); break;
      case Command::ensemble: alrite::cmd_ensemble(config, out); break;
      case Command::bounds: alrite::cmd_bounds(config, out); break;
      case Command::report: alrite::cmd_report(config, out); break;
    }
  } catch (const alrite::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
