#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "hdsa/commands.hpp"
#include "hdsa/config.hpp"
#include "hdsa/log.hpp"

int main(int argc, char** argv) {
  CLI::App app{
      "hdsa-lab: sensitivity of a PDE-constrained Bayesian inverse problem "
      "(MAP points and Bayes risk) to its auxiliary and experimental parameters"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  int workers = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run configuration file")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "master seed (overrides the config)");
    cmd->add_option("--out", out_dir, "output directory (created if missing)");
    cmd->add_option("--workers", workers, "worker thread cap (overrides the config)")
        ->check(CLI::PositiveNumber);
  };

  add_common(app.add_subcommand(
      "synthesize", "Draw prior samples and synthesize noisy sensor data"));
  add_common(app.add_subcommand(
      "map", "Solve the MAP estimation problem for every sample"));
  add_common(app.add_subcommand(
      "hdsa", "Full pipeline: MAP points, Bayes risk, and all sensitivity indices"));
  add_common(app.add_subcommand(
      "oracle", "Closed-form 1D study: state curve, data, posterior densities"));
  add_common(app.add_subcommand(
      "spread", "Spread of generalized indices across random sample subgroups"));

  CLI11_PARSE(app, argc, argv);
  CLI::App* sub = app.get_subcommands().front();

  try {
    hdsa::RunConfig config;
    if (!config_path.empty()) config = hdsa::parse_config_file(config_path);
    if (sub->count("--seed") > 0) config.master_seed = seed;
    if (sub->count("--workers") > 0) config.workers = workers;
    hdsa::log_line(1, "running ", sub->get_name(), " with seed ", config.master_seed,
                   ", output to ", out_dir);
    return hdsa::run_command(sub->get_name(), config, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
