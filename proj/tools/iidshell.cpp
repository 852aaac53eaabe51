#include "iidshell/cli.hpp"
#include "iidshell/error.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>

int main(int argc, char** argv) {
  using namespace iidshell;

  CLI::App app{"Exact i.i.d. sampling through ellipsoidal shells and per-shell perfect sampling"};
  std::string verb = "all";
  CliCommand command;
  std::string config_path;
  std::string preset;
  std::string out_dir = command.out_dir.string();
  std::uint64_t seed = 0;
  std::size_t workers = 0;
  std::size_t draws = 0;
  bool list_presets = false;
  bool show_preset = false;

  app.add_option("command", verb, "pilot | weights | sample | validate | report | all")
      ->check(CLI::IsMember({"pilot", "weights", "sample", "validate", "report", "all"}));
  auto* config_opt = app.add_option("--config", config_path, "JSON run configuration");
  auto* preset_opt = app.add_option("--preset", preset, "shipped configuration (see --list-presets)");
  app.add_option("--out-dir", out_dir, "artifact directory");
  auto* seed_opt = app.add_option("--seed", seed, "override the configured seed");
  auto* workers_opt = app.add_option("--workers", workers, "override the worker count")->check(CLI::PositiveNumber);
  auto* draws_opt = app.add_option("--draws", draws, "override the number of draws K")->check(CLI::PositiveNumber);
  app.add_flag("--list-presets", list_presets, "print preset names and exit");
  app.add_flag("--show-preset", show_preset, "print the --preset configuration as JSON and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "ERROR ConfigError: " << e.what() << '\n';
    return exit_status(ErrorCode::ConfigError);
  }

  try {
    if (list_presets) {
      for (const auto& name : preset_names()) std::cout << name << '\n';
      return 0;
    }
    if (show_preset) {
      if (preset.empty()) fail(ErrorCode::ConfigError, "--show-preset needs --preset");
      std::cout << preset_text(preset) << '\n';
      return 0;
    }
    command.verb = parse_verb(verb);
    if (*config_opt) command.config_path = config_path;
    if (*preset_opt) command.preset = preset;
    command.out_dir = out_dir;
    if (*seed_opt) command.seed = seed;
    if (*workers_opt) command.workers = workers;
    if (*draws_opt) command.draws = draws;
    return run_pipeline(command, std::cout);
  } catch (const Error& e) {
    std::cerr << "ERROR " << to_string(e.code()) << ": " << e.what() << '\n';
    return exit_status(e.code());
  } catch (const std::exception& e) {
    std::cerr << "ERROR Internal: " << e.what() << '\n';
    return exit_status(ErrorCode::Internal);
  }
}
