#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "zirrel/error.hpp"
#include "zirrel/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Return-distribution abstractions toolkit", "zirrel"};
  app.set_version_flag("--version", zirrel::kToolVersion);
  app.require_subcommand(1);

  std::string config;
  std::string out_dir = "out";
  std::string seeds;
  for (const auto& name : zirrel::command_names()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "JSON config file")->required();
    sub->add_option("--out-dir", out_dir, "Output directory (created if missing)");
    sub->add_option("--seeds", seeds, "Comma-separated seed list, overrides the config");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return zirrel::kExitConfig;
  }

  zirrel::RunOptions options;
  options.config_path = config;
  options.out_dir = out_dir;
  if (!seeds.empty()) {
    try {
      options.seeds = zirrel::parse_seed_list(seeds);
    } catch (const zirrel::PreconditionError& e) {
      std::cerr << "error: " << e.what() << '\n';
      return zirrel::kExitConfig;
    }
  }

  const std::string command = app.get_subcommands().front()->get_name();
  const zirrel::RunOutcome outcome = zirrel::run_command(command, options);
  std::cout << outcome.summary.dump() << std::endl;
  if (outcome.exit_code != zirrel::kExitOk && outcome.summary.contains("message")) {
    std::cerr << "error: " << outcome.summary["message"].get<std::string>() << '\n';
  }
  return outcome.exit_code;
}
