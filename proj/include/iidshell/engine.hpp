#pragma once

#include "iidshell/diffeo.hpp"
#include "iidshell/estimate.hpp"
#include "iidshell/geometry.hpp"
#include "iidshell/perfect.hpp"
#include "iidshell/target.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace iidshell {

struct RunConfig {
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  std::size_t K = 1000;
  std::size_t n_per_shell = 10'000;
  std::size_t M = 71;
  double r = 4.0;
  double a = 0.5;
  double eta = 1e-5;
  double epsilon = 1e-3;
  ShellSampling sampling;
  std::optional<double> flatten_b;
  JacobianConvention jacobian = JacobianConvention::AtPreimage;
  PerfectLimits limits;
  std::size_t max_M = std::size_t{1} << 20;

  /// Throws ConfigError when a count is zero or a parameter is out of range.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& config);

/// eta actually used on a shell: the configured value, or 0 for thin-shell
/// sampling.
double effective_eta(const RunConfig& config, ShellMode mode);

ShellSystem make_shell_system(const RunConfig& config, const Vector& mu, const Matrix& sigma);

/// Estimate for shell i from the stream keyed by (seed, shell i, lane).
ShellEstimate estimate_shell_for_run(const RunConfig& config, const TargetModel& target,
                                     const ShellSystem& shells, std::size_t i, std::size_t lane = 0);

/// One estimation task per shell over `config.workers` threads. The result
/// does not depend on the worker count. Throws DegenerateTarget when every
/// shell has zero mass.
WeightTable estimate_weights_parallel(const RunConfig& config, const TargetModel& target,
                                      const ShellSystem& shells, std::size_t lane = 0);

/// Shells and weights for one sampled component (the whole target when it is
/// not a mixture).
struct ComponentPlan {
  ShellSystem shells;
  WeightTable table;
};

struct DrawRecord {
  std::size_t draw_index = 0;
  std::size_t component = 0;
  std::size_t shell_index = 0;
  std::uint64_t t_coalesce = 0;
  std::uint64_t mh_trials = 0;
  std::uint64_t residual_rejections = 0;
  Vector theta;
};

struct SampleSet {
  std::vector<DrawRecord> draws;
  /// Largest shell count reached over all components.
  std::size_t final_M = 0;
  std::size_t extensions = 0;
  /// Plans after any doubling, one per component.
  std::vector<ComponentPlan> plans;
  bool mixture = false;
};

/// K independent draws, draw k using only the stream keyed by (seed, k).
/// Shell selections that land in the outermost shell double M for the whole
/// run and are re-checked with their original uniforms before any perfect
/// draw starts.
SampleSet sample_iid(const RunConfig& config, const TargetModel& target, const ShellSystem& shells,
                     const WeightTable& table);

/// Mixture version: each draw first picks a component with the known
/// mixture weights, then samples that component through its own plan.
SampleSet sample_iid_mixture(const RunConfig& config, const TargetModel& target,
                             std::vector<ComponentPlan> plans);

/// Shell systems for the components of a mixture target, centered and
/// scaled by each component's location and scale.
std::vector<ComponentPlan> plan_mixture(const RunConfig& config, const TargetModel& target);

struct WeightCheckpoint {
  std::vector<ComponentPlan> plans;
  /// Empty for a single-component run.
  std::vector<double> mixture_weights;
  std::uint64_t seed = 0;
  std::string target_id;
  double d_tilde = 1e5;
};

nlohmann::json checkpoint_to_json(const WeightCheckpoint& checkpoint);
WeightCheckpoint checkpoint_from_json(const nlohmann::json& doc);
void write_checkpoint(const std::filesystem::path& path, const WeightCheckpoint& checkpoint);
WeightCheckpoint read_checkpoint(const std::filesystem::path& path);

/// `draw_index,shell_index,t_coalesce,theta_0,...` with 17 significant
/// digits. Mixture runs also write `<stem>_components.csv`.
void write_samples_csv(const std::filesystem::path& path, const SampleSet& samples);

struct SampleRows {
  std::vector<std::size_t> draw_index;
  std::vector<std::size_t> shell_index;
  std::vector<std::uint64_t> t_coalesce;
  std::vector<std::size_t> component;
  Matrix theta;
};

SampleRows read_samples_csv(const std::filesystem::path& path);

/// Draws as a K x d matrix.
Matrix sample_matrix(const SampleSet& samples);

std::string library_version();

}  // namespace iidshell
