#include "iidshell/cli.hpp"

#include "iidshell/datasets.hpp"
#include "iidshell/diffeo.hpp"
#include "iidshell/error.hpp"
#include "iidshell/validate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace iidshell {
namespace {

using nlohmann::json;

// ---------------------------------------------------------------- parsing

class ConfigReader {
 public:
  ConfigReader(const std::string& text, std::string origin) : text_(text), origin_(std::move(origin)) {}

  [[noreturn]] void error(const std::string& key, const std::string& msg) const {
    fail(ErrorCode::ConfigError, origin_ + ":" + std::to_string(line_of(key)) + ": " + msg);
  }

  std::size_t line_of(const std::string& key) const {
    if (key.empty()) return 1;
    const auto pos = text_.find("\"" + key + "\"");
    if (pos == std::string::npos) return 1;
    return 1 + static_cast<std::size_t>(std::count(text_.begin(), text_.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
  }

  void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& section) const {
    if (!obj.is_object()) error(section, "'" + section + "' must be an object");
    for (const auto& [key, value] : obj.items()) {
      if (!allowed.contains(key)) {
        error(key, "unknown key '" + key + "'" + (section.empty() ? "" : " in section '" + section + "'"));
      }
    }
  }

  double number(const json& obj, const std::string& key, double fallback) const {
    if (!obj.contains(key)) return fallback;
    const auto& v = obj.at(key);
    if (!v.is_number()) error(key, "'" + key + "' must be a number");
    return v.get<double>();
  }

  std::uint64_t count(const json& obj, const std::string& key, std::uint64_t fallback) const {
    if (!obj.contains(key)) return fallback;
    const auto& v = obj.at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number()) {
      const double x = v.get<double>();
      if (x >= 0.0 && std::floor(x) == x && x < 1.8e19) return static_cast<std::uint64_t>(x);
    }
    error(key, "'" + key + "' must be a nonnegative integer");
  }

  bool flag(const json& obj, const std::string& key, bool fallback) const {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_boolean()) error(key, "'" + key + "' must be true or false");
    return obj.at(key).get<bool>();
  }

  std::string string(const json& obj, const std::string& key, const std::string& fallback) const {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_string()) error(key, "'" + key + "' must be a string");
    return obj.at(key).get<std::string>();
  }

  Vector vector(const json& v, const std::string& key) const {
    if (!v.is_array()) error(key, "'" + key + "' must be an array of numbers");
    Vector out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (!v[k].is_number()) error(key, "'" + key + "' must be an array of numbers");
      out[static_cast<Eigen::Index>(k)] = v[k].get<double>();
    }
    return out;
  }

  Matrix matrix(const json& v, const std::string& key) const {
    if (!v.is_array() || v.empty()) error(key, "'" + key + "' must be a square array of arrays");
    const auto n = static_cast<Eigen::Index>(v.size());
    Matrix out(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vector row = vector(v[static_cast<std::size_t>(i)], key);
      if (row.size() != n) error(key, "'" + key + "' must be square");
      out.row(i) = row.transpose();
    }
    return out;
  }

  template <typename F>
  auto guarded(const std::string& key, F&& f) const -> decltype(f()) {
    try {
      return f();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ConfigError || exit_status(e.code()) == 3) throw;
      error(key, e.what());
    }
  }

 private:
  const std::string& text_;
  std::string origin_;
};

const std::set<std::string> kTopKeys{"name", "seed", "K", "workers", "target", "shells",
                                     "pilot", "flatten", "caps", "validate"};
const std::set<std::string> kTargetKeys{"kind", "d", "loc", "loc_factor", "scale", "locs", "loc_multiples",
                                        "weights", "data", "log_shift"};
const std::set<std::string> kShellKeys{"source", "r", "a", "M", "n", "eta", "epsilon",
                                       "mode", "d_tilde", "auto_threshold"};
const std::set<std::string> kPilotKeys{"scales", "n_iter", "burn_in", "thin", "enhance", "robust", "init"};
const std::set<std::string> kFlattenKeys{"b", "jacobian"};
const std::set<std::string> kCapKeys{"t_max", "max_residual_trials", "max_M", "max_shell_attempts"};
const std::set<std::string> kValidateKeys{"alpha", "correlation_tolerance", "reference_corr", "curve_points",
                                          "pilot_thin"};

bool is_standard_kind(const std::string& kind) {
  return kind == "normal" || kind == "student_t5" || kind == "cauchy" || kind == "normal_mixture";
}

void check_target_section(const ConfigReader& rd, const json& t) {
  rd.check_keys(t, kTargetKeys, "target");
  const auto kind = rd.string(t, "kind", "");
  if (kind.empty()) rd.error("target", "target.kind is required");
  if (kind == "challenger" || kind == "salmonella") return;
  if (!is_standard_kind(kind)) rd.error("kind", "unknown target kind '" + kind + "'");
  if (rd.count(t, "d", 0) == 0) rd.error("d", "target.d must be a positive integer");
  if (t.contains("loc") && !t.at("loc").is_array() && t.at("loc") != "ramp")
    rd.error("loc", "target.loc must be an array or \"ramp\"");
  if (t.contains("scale") && !t.at("scale").is_array() && t.at("scale") != "banded" && t.at("scale") != "identity")
    rd.error("scale", "target.scale must be a matrix, \"banded\" or \"identity\"");
}

PipelineConfig parse_document(const json& doc, const ConfigReader& rd) {
  rd.check_keys(doc, kTopKeys, "");
  PipelineConfig cfg;
  RunConfig& run = cfg.run;
  cfg.name = rd.string(doc, "name", "");
  run.seed = rd.count(doc, "seed", run.seed);
  run.K = rd.count(doc, "K", run.K);
  run.workers = rd.count(doc, "workers", run.workers);

  if (!doc.contains("target")) rd.error("", "missing required section 'target'");
  cfg.target = doc.at("target");
  check_target_section(rd, cfg.target);
  const auto kind = cfg.target.at("kind").get<std::string>();

  const json shells = doc.value("shells", json::object());
  rd.check_keys(shells, kShellKeys, "shells");
  run.r = rd.number(shells, "r", run.r);
  run.a = rd.number(shells, "a", run.a);
  run.M = rd.count(shells, "M", run.M);
  run.n_per_shell = rd.count(shells, "n", run.n_per_shell);
  run.eta = rd.number(shells, "eta", run.eta);
  run.epsilon = rd.number(shells, "epsilon", run.epsilon);
  run.sampling.d_tilde = rd.number(shells, "d_tilde", run.sampling.d_tilde);
  run.sampling.auto_threshold = rd.number(shells, "auto_threshold", run.sampling.auto_threshold);
  run.sampling.policy =
      rd.guarded("mode", [&] { return parse_mode_policy(rd.string(shells, "mode", "auto")); });
  const bool posterior = kind == "challenger" || kind == "salmonella";
  const auto source = rd.string(shells, "source", posterior ? "pilot" : "target");
  if (source == "pilot") {
    cfg.source = ShellSource::Pilot;
  } else if (source == "target") {
    cfg.source = ShellSource::Target;
    if (posterior) rd.error("source", "posterior targets need shells.source = \"pilot\"");
  } else {
    rd.error("source", "shells.source must be \"target\" or \"pilot\"");
  }

  if (doc.contains("pilot")) {
    const json& p = doc.at("pilot");
    rd.check_keys(p, kPilotKeys, "pilot");
    PilotSpec spec;
    if (!p.contains("scales")) rd.error("pilot", "pilot.scales is required");
    spec.scales = rd.vector(p.at("scales"), "scales");
    spec.options.n_iter = rd.count(p, "n_iter", spec.options.n_iter);
    spec.options.burn_in = rd.count(p, "burn_in", spec.options.burn_in);
    spec.options.thin = rd.count(p, "thin", spec.options.thin);
    spec.options.enhance = rd.flag(p, "enhance", spec.options.enhance);
    spec.options.robust = rd.flag(p, "robust", spec.options.robust);
    if (p.contains("init")) spec.options.init = rd.vector(p.at("init"), "init");
    if (spec.options.thin == 0) rd.error("thin", "pilot.thin must be positive");
    if (spec.options.burn_in >= spec.options.n_iter) rd.error("burn_in", "pilot.burn_in must be below pilot.n_iter");
    if (!(spec.scales.array() > 0.0).all()) rd.error("scales", "pilot.scales must be positive");
    cfg.pilot = std::move(spec);
  }
  if (cfg.source == ShellSource::Pilot && !cfg.pilot) rd.error("shells", "shells.source = \"pilot\" needs a pilot section");

  if (doc.contains("flatten") && !doc.at("flatten").is_null()) {
    const json& f = doc.at("flatten");
    rd.check_keys(f, kFlattenKeys, "flatten");
    if (!f.contains("b")) rd.error("flatten", "flatten.b is required");
    run.flatten_b = rd.number(f, "b", 1.0);
    run.jacobian =
        rd.guarded("jacobian", [&] { return parse_jacobian_convention(rd.string(f, "jacobian", "at_preimage")); });
    if (kind == "normal_mixture") rd.error("flatten", "flattening is not supported for mixture targets");
    if (cfg.source != ShellSource::Pilot) rd.error("flatten", "flattening needs shells.source = \"pilot\"");
  }

  const json caps = doc.value("caps", json::object());
  rd.check_keys(caps, kCapKeys, "caps");
  run.limits.t_max = rd.count(caps, "t_max", run.limits.t_max);
  run.limits.max_residual_trials = rd.count(caps, "max_residual_trials", run.limits.max_residual_trials);
  run.max_M = rd.count(caps, "max_M", run.max_M);
  run.sampling.max_attempts = rd.count(caps, "max_shell_attempts", run.sampling.max_attempts);

  const json val = doc.value("validate", json::object());
  rd.check_keys(val, kValidateKeys, "validate");
  cfg.validate.alpha = rd.number(val, "alpha", cfg.validate.alpha);
  cfg.validate.correlation_tolerance = rd.number(val, "correlation_tolerance", cfg.validate.correlation_tolerance);
  cfg.validate.curve_points = rd.count(val, "curve_points", cfg.validate.curve_points);
  cfg.validate.pilot_thin = rd.count(val, "pilot_thin", cfg.validate.pilot_thin);
  if (val.contains("reference_corr")) cfg.validate.reference_corr = rd.matrix(val.at("reference_corr"), "reference_corr");
  if (!(cfg.validate.alpha > 0.0 && cfg.validate.alpha < 1.0)) rd.error("alpha", "validate.alpha must lie in (0, 1)");
  if (cfg.validate.curve_points < 2) rd.error("curve_points", "validate.curve_points must be at least 2");
  if (cfg.validate.pilot_thin == 0) rd.error("pilot_thin", "validate.pilot_thin must be positive");

  rd.guarded("", [&] {
    run.validate();
    return 0;
  });
  return cfg;
}

// ---------------------------------------------------------------- presets

struct PresetShape {
  double r;
  double a;
  std::size_t M;
};

json standard_preset(const std::string& kind, std::size_t d, PresetShape s, bool desk) {
  return {{"seed", 20240601},
          {"K", desk ? 1000 : 10000},
          {"workers", 1},
          {"target", {{"kind", kind}, {"d", d}, {"loc", "ramp"}, {"scale", "banded"}}},
          {"shells", {{"source", "target"}, {"r", s.r}, {"a", s.a}, {"M", s.M}, {"n", desk ? 2000 : 10000},
                      {"eta", 1e-5}, {"mode", "auto"}}}};
}

json mixture_preset(std::size_t d, bool desk) {
  return {{"seed", 20240601},
          {"K", desk ? 1000 : 10000},
          {"workers", 1},
          {"target", {{"kind", "normal_mixture"}, {"d", d}, {"loc_multiples", {1, 2}}, {"scale", "banded"},
                      {"weights", {2.0 / 3.0, 1.0 / 3.0}}}},
          {"shells", {{"source", "target"}, {"r", 4}, {"a", 0.5}, {"M", 71}, {"n", desk ? 2000 : 10000},
                      {"eta", 1e-5}}}};
}

json posterior_preset(const std::string& kind, bool desk) {
  const bool challenger = kind == "challenger";
  json scales = challenger ? json{7.944, 9.762} : json{0.21832, 0.056563, 0.00024192};
  return {{"seed", 20240601},
          {"K", desk ? 1000 : 10000},
          {"workers", 1},
          {"target", {{"kind", kind}}},
          {"pilot", {{"scales", scales}, {"n_iter", desk ? 40000 : 200000}, {"burn_in", desk ? 20000 : 100000},
                     {"thin", 1}, {"enhance", true}}},
          {"shells", {{"source", "pilot"}, {"r", challenger ? 2.0 : 3.0}, {"a", 0.02}, {"M", challenger ? 85 : 200},
                      {"n", desk ? 1000 : 5000}, {"eta", 0.0}, {"mode", "thin_shell"}, {"d_tilde", 1e5}}},
          {"validate", {{"alpha", 0.001}, {"pilot_thin", 10}}}};
}

json flattened_preset(bool desk) {
  return {{"seed", 20240601},
          {"K", desk ? 1000 : 5000},
          {"workers", 1},
          {"target", {{"kind", "normal"}, {"d", 2}, {"loc", "ramp"}, {"scale", "banded"}}},
          {"pilot", {{"scales", {3.0, 3.0}}, {"n_iter", desk ? 40000 : 200000}, {"burn_in", desk ? 20000 : 100000},
                     {"thin", 1}, {"enhance", true}}},
          {"shells", {{"source", "pilot"}, {"r", 2}, {"a", 0.5}, {"M", 40}, {"n", desk ? 2000 : 10000},
                      {"eta", 1e-5}}},
          {"flatten", {{"b", 0.1}}}};
}

const std::map<std::string, json>& preset_table() {
  static const std::map<std::string, json> table = [] {
    std::map<std::string, json> t;
    const auto add = [&t](const std::string& name, auto make) {
      t[name] = make(false);
      t[name + "-desk"] = make(true);
      t[name]["name"] = name;
      t[name + "-desk"]["name"] = name + "-desk";
    };
    for (std::size_t d : {1, 5, 10, 100}) {
      add("normal-d" + std::to_string(d),
          [d](bool desk) { return standard_preset("normal", d, {4.0, 0.5, 71}, desk); });
    }
    const std::map<std::size_t, PresetShape> t5{{1, {5.0, 3.801, 1000}}, {5, {4.0, 2.1654, 1000}}, {10, {4.0, 2.5, 1000}}};
    for (const auto& [d, s] : t5)
      add("t5-d" + std::to_string(d), [d, s](bool desk) { return standard_preset("student_t5", d, s, desk); });
    const std::map<std::size_t, PresetShape> cauchy{{1, {5.0, 3.801, 2000}}, {5, {0.5, 0.5, 3000}}, {10, {0.5, 0.5, 3000}}};
    for (const auto& [d, s] : cauchy)
      add("cauchy-d" + std::to_string(d), [d, s](bool desk) { return standard_preset("cauchy", d, s, desk); });
    add("mixture-d2", [](bool desk) { return mixture_preset(2, desk); });
    add("mixture-d50", [](bool desk) { return mixture_preset(50, desk); });
    add("challenger", [](bool desk) { return posterior_preset("challenger", desk); });
    add("salmonella", [](bool desk) { return posterior_preset("salmonella", desk); });
    add("flattened-normal-d2", [](bool desk) { return flattened_preset(desk); });
    return t;
  }();
  return table;
}

// ---------------------------------------------------------------- targets

Vector target_vector(const json& t, const std::string& key, std::size_t d) {
  const double factor = t.value("loc_factor", 1.0);
  if (!t.contains(key) || t.at(key) == "ramp") return ramp_location(d, factor);
  Vector v(static_cast<Eigen::Index>(t.at(key).size()));
  for (std::size_t k = 0; k < t.at(key).size(); ++k) v[static_cast<Eigen::Index>(k)] = t.at(key)[k].get<double>();
  if (static_cast<std::size_t>(v.size()) != d) fail(ErrorCode::ConfigError, "target." + key + " must have d entries");
  return v;
}

Matrix target_scale(const json& t, std::size_t d) {
  const auto n = static_cast<Eigen::Index>(d);
  if (!t.contains("scale") || t.at("scale") == "banded") return banded_scale(d);
  if (t.at("scale") == "identity") return Matrix::Identity(n, n);
  Matrix m(n, n);
  const auto& rows = t.at("scale");
  if (rows.size() != d) fail(ErrorCode::ConfigError, "target.scale must be d x d");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (rows[static_cast<std::size_t>(i)].size() != d) fail(ErrorCode::ConfigError, "target.scale must be d x d");
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].get<double>();
  }
  return m;
}

std::filesystem::path data_path(const PipelineConfig& cfg, const std::string& file) {
  if (cfg.target.contains("data")) {
    std::filesystem::path p = cfg.target.at("data").get<std::string>();
    return p.is_absolute() || cfg.base_dir.empty() ? p : cfg.base_dir / p;
  }
  return bundled_data_dir() / file;
}

// ---------------------------------------------------------------- artifacts

json read_json(const std::filesystem::path& path, const std::string& stage) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::MissingArtifact, "stage '" + stage + "' has not produced " + path.filename().string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::DataError, path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::DataError, "cannot write " + path.string());
  out << doc.dump(1) << '\n';
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::DataError, "cannot write " + path.string());
  for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << "theta_" << j;
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << fmt(m(i, j));
    out << '\n';
  }
}

Matrix read_matrix_csv(const std::filesystem::path& path, const std::string& stage) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::MissingArtifact, "stage '" + stage + "' has not produced " + path.filename().string());
  std::string line;
  std::getline(in, line);
  const auto cols = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ',') + 1);
  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    Eigen::Index n = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        fail(ErrorCode::DataError, path.string() + ": row " + std::to_string(rows + 2) + " is not numeric");
      }
      ++n;
    }
    if (n != cols) fail(ErrorCode::DataError, path.string() + ": row " + std::to_string(rows + 2) + " has the wrong field count");
    ++rows;
  }
  Matrix m(static_cast<Eigen::Index>(rows), cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(static_cast<Eigen::Index>(i), j) = values[i * static_cast<std::size_t>(cols) + static_cast<std::size_t>(j)];
  return m;
}

json vector_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vector_json(m.row(i).transpose()));
  return rows;
}

struct Paths {
  std::filesystem::path dir;
  std::filesystem::path pilot_samples() const { return dir / "pilot_samples.csv"; }
  std::filesystem::path pilot_summary() const { return dir / "pilot_summary.json"; }
  std::filesystem::path weights() const { return dir / "weights.json"; }
  std::filesystem::path weights_final() const { return dir / "weights_final.json"; }
  std::filesystem::path samples() const { return dir / "samples.csv"; }
  std::filesystem::path manifest() const { return dir / "manifest.json"; }
  std::filesystem::path report() const { return dir / "report.json"; }
  std::filesystem::path curves() const { return dir / "curves"; }
};

// ---------------------------------------------------------------- stages

void stage_pilot(const PipelineConfig& cfg, const Paths& paths, std::ostream& log) {
  if (cfg.source != ShellSource::Pilot) {
    log << "pilot: skipped (shells use the target's location and scale)\n";
    return;
  }
  const TargetModel target = build_target(cfg);
  auto rng = derive_stream(cfg.run.seed, StreamPurpose::Pilot, 0);
  const PilotRun run = run_additive_tmcmc(rng, target, cfg.pilot->scales, cfg.pilot->options);
  write_matrix_csv(paths.pilot_samples(), run.samples);
  const auto& s = run.summary;
  write_json(paths.pilot_summary(), {{"mu", vector_json(s.mu_hat)},
                                     {"sigma", matrix_json(s.sigma_hat)},
                                     {"acceptance_rate", s.acceptance_rate},
                                     {"n_iter", s.n_iter},
                                     {"burn_in", s.burn_in},
                                     {"thin", s.thin},
                                     {"robust", s.robust}});
  log << "pilot: " << run.samples.rows() << " states retained, acceptance rate " << s.acceptance_rate << '\n';
}

std::pair<Vector, Matrix> shell_frame(const PipelineConfig& cfg, const TargetModel& base, const Paths& paths) {
  if (cfg.source == ShellSource::Target) {
    const auto& shape = base.shape();
    if (!shape) fail(ErrorCode::ConfigError, "target has no location/scale; use shells.source = \"pilot\"");
    return {shape->loc, shape->scale};
  }
  const bool robust = cfg.pilot->options.robust;
  if (cfg.run.flatten_b) {
    Matrix samples = read_matrix_csv(paths.pilot_samples(), "pilot");
    for (Eigen::Index k = 0; k < samples.rows(); ++k)
      samples.row(k) = h_apply(*cfg.run.flatten_b, samples.row(k).transpose()).transpose();
    return estimate_location_scale(samples, robust);
  }
  const json summary = read_json(paths.pilot_summary(), "pilot");
  const Vector mu = Eigen::Map<const Vector>(summary.at("mu").get<std::vector<double>>().data(),
                                             static_cast<Eigen::Index>(summary.at("mu").size()));
  const auto d = mu.size();
  Matrix sigma(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      sigma(i, j) = summary.at("sigma")[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].get<double>();
  return {mu, sigma};
}

void stage_weights(const PipelineConfig& cfg, const Paths& paths, std::ostream& log) {
  const TargetModel base = build_target(cfg);
  const TargetModel target = build_sampling_target(cfg);
  WeightCheckpoint cp;
  cp.seed = cfg.run.seed;
  cp.target_id = target.id();
  cp.d_tilde = cfg.run.sampling.d_tilde;
  if (target.is_mixture()) {
    cp.plans = plan_mixture(cfg.run, target);
    for (const auto& c : target.mixture()) cp.mixture_weights.push_back(c.weight);
  } else {
    auto [mu, sigma] = shell_frame(cfg, base, paths);
    auto shells = make_shell_system(cfg.run, mu, sigma);
    auto table = estimate_weights_parallel(cfg.run, target, shells);
    cp.plans.push_back({std::move(shells), std::move(table)});
  }
  write_checkpoint(paths.weights(), cp);
  std::size_t zero = 0;
  for (const auto& p : cp.plans)
    for (const auto& e : p.table.estimates()) zero += e.zero_mass() ? 1 : 0;
  log << "weights: " << cp.plans.size() << " component(s), M = " << cp.plans.front().table.M()
      << ", zero-mass shells = " << zero << '\n';
}

void stage_sample(const PipelineConfig& cfg, const Paths& paths, std::ostream& log) {
  if (!std::filesystem::exists(paths.weights()))
    fail(ErrorCode::MissingArtifact, "stage 'weights' has not produced weights.json");
  WeightCheckpoint cp = read_checkpoint(paths.weights());
  const TargetModel target = build_sampling_target(cfg);
  if (cp.target_id != target.id()) {
    fail(ErrorCode::ConfigError,
         "weights.json was built for target '" + cp.target_id + "', config describes '" + target.id() + "'");
  }
  SampleSet samples = target.is_mixture()
                          ? sample_iid_mixture(cfg.run, target, cp.plans)
                          : sample_iid(cfg.run, target, cp.plans.front().shells, cp.plans.front().table);
  write_samples_csv(paths.samples(), samples);

  WeightCheckpoint final_cp = cp;
  final_cp.plans = samples.plans;
  write_checkpoint(paths.weights_final(), final_cp);

  json tails = json::array();
  for (const auto& p : samples.plans) {
    const auto diag = tail_mass_diagnostic(p.table);
    tails.push_back({{"tail_fraction", diag.tail_fraction}, {"epsilon", diag.epsilon},
                     {"within_epsilon", diag.within_epsilon}, {"M", p.table.M()}});
  }
  std::uint64_t max_t = 0;
  for (const auto& r : samples.draws) max_t = std::max(max_t, r.t_coalesce);
  write_json(paths.manifest(), {{"version", library_version()},
                                {"name", cfg.name},
                                {"target_id", target.id()},
                                {"dimension", target.dimension()},
                                {"config", to_json(cfg.run)},
                                {"target", cfg.target},
                                {"K", samples.draws.size()},
                                {"final_M", samples.final_M},
                                {"extensions", samples.extensions},
                                {"max_t_coalesce", max_t},
                                {"tail", tails}});
  log << "sample: " << samples.draws.size() << " draws, final M = " << samples.final_M << " after "
      << samples.extensions << " doubling(s)\n";
}

void stage_validate(const PipelineConfig& cfg, const Paths& paths, std::ostream& log) {
  if (!std::filesystem::exists(paths.samples()))
    fail(ErrorCode::MissingArtifact, "stage 'sample' has not produced samples.csv");
  const SampleRows rows = read_samples_csv(paths.samples());
  const WeightCheckpoint cp = read_checkpoint(paths.weights_final());
  const TargetModel base = build_target(cfg);

  std::optional<Matrix> reference = cfg.validate.reference_corr;
  if (!reference) reference = analytic_correlation(base);
  // Shell occupancy is only meaningful in the space the shells live in.
  const bool shells_in_theta = !cfg.run.flatten_b;
  const std::vector<std::size_t> no_shells;
  ValidationReport report =
      validate_samples(base, rows.theta, shells_in_theta ? rows.shell_index : no_shells, rows.component,
                       cp.plans, reference, cfg.validate.alpha, cfg.validate.correlation_tolerance);

  if (!base.has_marginal_cdf() && std::filesystem::exists(paths.pilot_samples())) {
    const Matrix pilot = read_matrix_csv(paths.pilot_samples(), "pilot");
    report.ks_reference = "pilot";
    report.ks.clear();
    for (Eigen::Index j = 0; j < rows.theta.cols(); ++j) {
      std::vector<double> a(rows.theta.col(j).data(), rows.theta.col(j).data() + rows.theta.rows());
      std::vector<double> b;
      for (Eigen::Index k = 0; k < pilot.rows(); k += static_cast<Eigen::Index>(cfg.validate.pilot_thin))
        b.push_back(pilot(k, j));
      report.ks.push_back(ks_two_sample(a, b));
    }
    report.ks_pass = std::all_of(report.ks.begin(), report.ks.end(),
                                 [&](const KsResult& k) { return k.p_value >= cfg.validate.alpha; });
  }
  write_json(paths.report(), to_json(report));

  std::filesystem::create_directories(paths.curves());
  for (Eigen::Index j = 0; j < rows.theta.cols(); ++j) {
    std::vector<double> col(rows.theta.col(j).data(), rows.theta.col(j).data() + rows.theta.rows());
    const auto grid = default_grid(col, cfg.validate.curve_points);
    std::ofstream out(paths.curves() / ("coord_" + std::to_string(j) + ".csv"), std::ios::binary);
    out << "x,density\n";
    for (const auto& [x, y] : emit_density_curve(col, grid)) out << fmt(x) << ',' << fmt(y) << '\n';
  }
  log << "validate: " << (report.passed() ? "PASS" : "FAIL") << '\n';
}

void stage_report(const Paths& paths, std::ostream& log) {
  const json report = read_json(paths.report(), "validate");
  const json manifest = read_json(paths.manifest(), "sample");
  log << "report: target " << manifest.at("target_id").get<std::string>() << ", K = " << manifest.at("K")
      << ", final M = " << manifest.at("final_M") << '\n';
  const auto& ks = report.at("ks");
  for (std::size_t j = 0; j < ks.size(); ++j) {
    log << "  KS[" << report.at("ks_reference").get<std::string>() << "] theta_" << j
        << ": D = " << ks[j].at("statistic") << ", p = " << ks[j].at("p_value") << '\n';
  }
  if (!report.at("correlation").is_null()) {
    log << "  correlation max |diff| = " << report.at("correlation").at("max_abs_diff") << '\n';
  }
  if (!report.at("shell_chisq").is_null()) {
    log << "  shell occupancy chi-square = " << report.at("shell_chisq").at("statistic")
        << ", p = " << report.at("shell_chisq").at("p_value") << '\n';
  }
  log << "  overall: " << (report.at("pass").at("all").get<bool>() ? "PASS" : "FAIL") << '\n';
}

}  // namespace

Verb parse_verb(std::string_view name) {
  if (name == "pilot") return Verb::Pilot;
  if (name == "weights") return Verb::Weights;
  if (name == "sample") return Verb::Sample;
  if (name == "validate") return Verb::Validate;
  if (name == "report") return Verb::Report;
  if (name == "all") return Verb::All;
  fail(ErrorCode::ConfigError, "unknown command '" + std::string(name) + "'");
}

const char* to_string(Verb verb) noexcept {
  switch (verb) {
    case Verb::Pilot: return "pilot";
    case Verb::Weights: return "weights";
    case Verb::Sample: return "sample";
    case Verb::Validate: return "validate";
    case Verb::Report: return "report";
    case Verb::All: return "all";
  }
  return "all";
}

PipelineConfig parse_config(const std::string& text, const std::string& origin,
                            const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    fail(ErrorCode::ConfigError, origin + ":" + std::to_string(line) + ": invalid JSON (" + e.what() + ")");
  }
  ConfigReader rd(text, origin);
  PipelineConfig cfg = parse_document(doc, rd);
  cfg.base_dir = base_dir;
  rd.guarded("target", [&] { return build_target(cfg); });
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ConfigError, "cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string(), path.parent_path());
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& [name, doc] : preset_table()) names.push_back(name);
  return names;
}

std::string preset_text(std::string_view name) {
  const auto& table = preset_table();
  const auto it = table.find(std::string(name));
  if (it == table.end()) fail(ErrorCode::ConfigError, "unknown preset '" + std::string(name) + "'");
  return it->second.dump(2);
}

PipelineConfig load_preset(std::string_view name) {
  return parse_config(preset_text(name), "preset:" + std::string(name));
}

TargetModel build_target(const PipelineConfig& cfg) {
  const json& t = cfg.target;
  const auto kind = t.at("kind").get<std::string>();
  TargetModel target = [&]() -> TargetModel {
    if (kind == "challenger") return make_challenger_posterior(load_challenger(data_path(cfg, "challenger.csv")));
    if (kind == "salmonella") return make_salmonella_posterior(load_salmonella(data_path(cfg, "salmonella.csv")));
    const auto d = t.at("d").get<std::size_t>();
    const Matrix scale = target_scale(t, d);
    const StandardKind sk = parse_standard_kind(kind);
    if (sk != StandardKind::NormalMixture) return make_standard_target(sk, target_vector(t, "loc", d), scale);
    std::vector<Vector> locs;
    if (t.contains("locs")) {
      for (const auto& l : t.at("locs")) {
        Vector v(static_cast<Eigen::Index>(l.size()));
        for (std::size_t k = 0; k < l.size(); ++k) v[static_cast<Eigen::Index>(k)] = l[k].get<double>();
        locs.push_back(std::move(v));
      }
    } else {
      const json multiples = t.value("loc_multiples", json{1, 2});
      for (const auto& m : multiples) locs.push_back(ramp_location(d, m.get<double>()));
    }
    const auto weights = t.value("weights", std::vector<double>{2.0 / 3.0, 1.0 / 3.0});
    return make_standard_target(sk, locs, scale, weights);
  }();
  if (t.contains("log_shift")) {
    const double k = t.at("log_shift").get<double>();
    target = target.shifted(k).with_id(target.id() + "+" + fmt(k));
  }
  return target;
}

TargetModel build_sampling_target(const PipelineConfig& cfg) {
  TargetModel base = build_target(cfg);
  if (!cfg.run.flatten_b) return base;
  return make_transformed_target(base, *cfg.run.flatten_b, cfg.run.jacobian);
}

PipelineConfig resolve_config(const CliCommand& command) {
  if (command.config_path && command.preset) fail(ErrorCode::ConfigError, "give either --config or --preset, not both");
  if (!command.config_path && !command.preset) fail(ErrorCode::ConfigError, "one of --config or --preset is required");
  PipelineConfig cfg = command.config_path ? load_config(*command.config_path) : load_preset(*command.preset);
  if (command.seed) cfg.run.seed = *command.seed;
  if (command.workers) cfg.run.workers = *command.workers;
  if (command.draws) cfg.run.K = *command.draws;
  cfg.run.validate();
  return cfg;
}

int run_pipeline(const CliCommand& command, std::ostream& log) {
  const PipelineConfig cfg = resolve_config(command);
  std::filesystem::create_directories(command.out_dir);
  const Paths paths{command.out_dir};
  switch (command.verb) {
    case Verb::Pilot: stage_pilot(cfg, paths, log); break;
    case Verb::Weights: stage_weights(cfg, paths, log); break;
    case Verb::Sample: stage_sample(cfg, paths, log); break;
    case Verb::Validate: stage_validate(cfg, paths, log); break;
    case Verb::Report: stage_report(paths, log); break;
    case Verb::All:
      stage_pilot(cfg, paths, log);
      stage_weights(cfg, paths, log);
      stage_sample(cfg, paths, log);
      stage_validate(cfg, paths, log);
      stage_report(paths, log);
      break;
  }
  return 0;
}

}  // namespace iidshell
