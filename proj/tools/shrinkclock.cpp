#include <CLI11.hpp>

#include "shrinkclock/app.hpp"

int main(int argc, char** argv) {
  auto app = CLI::App{"Shrinkage-prior relaxed molecular clock sampler"};
  app.set_version_flag("--version", std::string{shrinkclock::k_version});
  app.require_subcommand(1);

  auto overrides = shrinkclock::Cli_overrides{};
  auto add_common = [&](CLI::App* cmd, std::string& config) {
    cmd->add_option("config", config, "configuration file")->required();
    cmd->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& s) { overrides.seed = s; },
                                            "override the configured seed");
    cmd->add_option_function<std::string>("--out-dir", [&](const std::string& d) { overrides.out_dir = d; },
                                          "override the output directory");
  };

  auto run_config = std::string{};
  auto* run = app.add_subcommand("run", "sample the clock posterior and summarize it");
  add_common(run, run_config);
  run->add_option_function<int>("--chains", [&](const int& k) { overrides.chains = k; },
                                "independent chains with derived seeds");
  run->add_option_function<std::string>("--resume", [&](const std::string& p) { overrides.resume = p; },
                                        "continue from a checkpoint file");

  auto sim_config = std::string{};
  auto* simulate = app.add_subcommand("simulate", "simulate an alignment on the planted-clock tree");
  add_common(simulate, sim_config);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    auto code = app.exit(e);
    return code == 0 ? 0 : shrinkclock::k_exit_config;
  }
  if (run->parsed()) { return shrinkclock::cmd_run(run_config, overrides); }
  return shrinkclock::cmd_simulate(sim_config, overrides);
}
