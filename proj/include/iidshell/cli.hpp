#pragma once

#include "iidshell/engine.hpp"
#include "iidshell/pilot.hpp"
#include "iidshell/target.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace iidshell {

enum class Verb { Pilot, Weights, Sample, Validate, Report, All };

Verb parse_verb(std::string_view name);
const char* to_string(Verb verb) noexcept;

/// Where the shell center and scale come from.
enum class ShellSource { Target, Pilot };

struct PilotSpec {
  Vector scales;
  PilotOptions options;
};

struct ValidateSpec {
  double alpha = 0.01;
  double correlation_tolerance = 0.05;
  std::optional<Matrix> reference_corr;
  std::size_t curve_points = 200;
  /// Thinning applied to the pilot chain before two-sample comparisons.
  std::size_t pilot_thin = 10;
};

struct PipelineConfig {
  std::string name;
  RunConfig run;
  nlohmann::json target;
  ShellSource source = ShellSource::Target;
  std::optional<PilotSpec> pilot;
  ValidateSpec validate;
  /// Relative data paths are resolved against this directory.
  std::filesystem::path base_dir;
};

/// Parses a JSON run configuration, filling defaults and rejecting unknown
/// keys. Every problem is reported as ConfigError with the line it refers to.
PipelineConfig parse_config(const std::string& text, const std::string& origin = "<config>",
                            const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

std::vector<std::string> preset_names();
/// JSON text of a shipped preset. Throws ConfigError for an unknown name.
std::string preset_text(std::string_view name);
PipelineConfig load_preset(std::string_view name);

/// The target described by the config, in parameter space.
TargetModel build_target(const PipelineConfig& config);
/// The target the sampler runs on: the parameter-space target, or its
/// flattened version when a flattening rate is configured.
TargetModel build_sampling_target(const PipelineConfig& config);

struct CliCommand {
  Verb verb = Verb::All;
  std::optional<std::filesystem::path> config_path;
  std::optional<std::string> preset;
  std::filesystem::path out_dir = "iidshell_out";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::size_t> draws;
};

/// The config a command resolves to, with flag overrides applied.
PipelineConfig resolve_config(const CliCommand& command);

/// Runs the requested stage(s), writing artifacts under out_dir. Progress
/// goes to `log`. Returns 0 on success; module failures throw Error.
int run_pipeline(const CliCommand& command, std::ostream& log);

}  // namespace iidshell
