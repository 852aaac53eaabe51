#include "iidshell/engine.hpp"

#include "iidshell/error.hpp"
#include "iidshell/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#ifndef IIDSHELL_VERSION
#define IIDSHELL_VERSION "0.0.0"
#endif

namespace iidshell {
namespace {

using nlohmann::json;

[[noreturn]] void config_error(const std::string& msg) { fail(ErrorCode::ConfigError, msg); }

json encode(double v) {
  if (v == kNegInf) return "-inf";
  if (v == std::numeric_limits<double>::infinity()) return "inf";
  return v;
}

double decode(const json& v) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "-inf") return kNegInf;
    if (s == "inf") return std::numeric_limits<double>::infinity();
    fail(ErrorCode::DataError, "unexpected numeric string '" + s + "' in checkpoint");
  }
  if (!v.is_number()) fail(ErrorCode::DataError, "expected a number in checkpoint");
  return v.get<double>();
}

json encode(const Vector& v) {
  json out = json::array();
  for (double x : v) out.push_back(encode(x));
  return out;
}

Vector decode_vector(const json& v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t k = 0; k < v.size(); ++k) out[static_cast<Eigen::Index>(k)] = decode(v[k]);
  return out;
}

json encode(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(encode(Vector(m.row(i).transpose())));
  return out;
}

Matrix decode_matrix(const json& v) {
  const auto n = static_cast<Eigen::Index>(v.size());
  Matrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = v[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(row.size()) != n) fail(ErrorCode::DataError, "checkpoint sigma is not square");
    for (Eigen::Index j = 0; j < n; ++j) out(i, j) = decode(row[static_cast<std::size_t>(j)]);
  }
  return out;
}

json plan_to_json(const ComponentPlan& plan, const WeightCheckpoint& cp) {
  const auto& shells = plan.shells;
  json doc;
  doc["d"] = shells.dimension();
  doc["mu"] = encode(shells.mu());
  doc["sigma"] = encode(shells.sigma());
  json radii = json::array();
  for (double r : shells.schedule().radii) radii.push_back(encode(r));
  doc["radii"] = std::move(radii);
  doc["step"] = encode(shells.schedule().step);
  doc["epsilon"] = encode(plan.table.epsilon());
  doc["d_tilde"] = encode(cp.d_tilde);
  json rows = json::array();
  for (const auto& e : plan.table.estimates()) {
    rows.push_back({{"i", e.i},
                    {"log_w", encode(e.log_w)},
                    {"log_s", encode(e.log_s)},
                    {"log_S", encode(e.log_S)},
                    {"p_hat", encode(e.p_hat)},
                    {"n", e.n},
                    {"eta", encode(e.eta)},
                    {"mode", to_string(e.mode)}});
  }
  doc["shells"] = std::move(rows);
  doc["seed"] = cp.seed;
  doc["target_id"] = cp.target_id;
  return doc;
}

ComponentPlan plan_from_json(const json& doc, WeightCheckpoint& cp) {
  RadiiSchedule schedule;
  for (const auto& r : doc.at("radii")) schedule.radii.push_back(decode(r));
  schedule.step = decode(doc.at("step"));
  const Vector mu = decode_vector(doc.at("mu"));
  if (doc.at("d").get<std::size_t>() != static_cast<std::size_t>(mu.size()))
    fail(ErrorCode::DataError, "checkpoint dimension does not match mu");
  ShellSystem shells = ShellSystem::build(mu, decode_matrix(doc.at("sigma")), schedule);
  std::vector<ShellEstimate> estimates;
  for (const auto& row : doc.at("shells")) {
    ShellEstimate e;
    e.i = row.at("i").get<std::size_t>();
    e.log_w = decode(row.at("log_w"));
    e.log_s = decode(row.at("log_s"));
    e.log_S = decode(row.at("log_S"));
    e.p_hat = decode(row.at("p_hat"));
    e.n = row.at("n").get<std::size_t>();
    e.eta = decode(row.at("eta"));
    e.mode = parse_shell_mode(row.at("mode").get<std::string>());
    estimates.push_back(e);
  }
  if (estimates.size() != shells.M()) fail(ErrorCode::DataError, "checkpoint has mismatched radii and shells");
  cp.seed = doc.at("seed").get<std::uint64_t>();
  cp.target_id = doc.at("target_id").get<std::string>();
  if (doc.contains("d_tilde")) cp.d_tilde = decode(doc.at("d_tilde"));
  return {std::move(shells), build_weight_table(std::move(estimates), decode(doc.at("epsilon")))};
}

struct Component {
  const TargetModel* target;
  ComponentPlan plan;
};

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

SampleSet run_sampler(const RunConfig& config, const TargetModel& output_target, std::vector<Component> components,
                      const std::vector<double>& mix_weights) {
  config.validate();
  const std::size_t K = config.K;
  const bool mixture = !mix_weights.empty();

  std::vector<RandomStream> streams;
  streams.reserve(K);
  for (std::size_t k = 0; k < K; ++k) streams.push_back(derive_stream(config.seed, StreamPurpose::Draw, k));

  std::vector<double> cum_mix;
  double acc = 0.0;
  for (double w : mix_weights) cum_mix.push_back(acc += w);

  std::vector<std::size_t> comp(K, 0);
  std::vector<double> u(K);
  for (std::size_t k = 0; k < K; ++k) {
    if (mixture) {
      const double uc = streams[k].uniform() * acc;
      const auto pos = std::upper_bound(cum_mix.begin(), cum_mix.end(), uc) - cum_mix.begin();
      comp[k] = std::min(static_cast<std::size_t>(pos), cum_mix.size() - 1);
    }
    u[k] = streams[k].uniform();
  }

  SampleSet out;
  out.mixture = mixture;
  std::vector<std::size_t> shell(K, 0);
  for (std::size_t c = 0; c < components.size(); ++c) {
    auto& plan = components[c].plan;
    const TargetModel& target = *components[c].target;
    for (;;) {
      bool extend = false;
      for (std::size_t k = 0; k < K; ++k) {
        if (comp[k] != c) continue;
        const auto sel = select_component(plan.table, u[k]);
        if (sel.need_extension) {
          extend = true;
          break;
        }
        shell[k] = sel.shell;
      }
      if (!extend) break;
      const ShellEstimator estimator = [&config, &target, c](const ShellSystem& s, std::size_t i) {
        return estimate_shell_for_run(config, target, s, i, c);
      };
      auto [grown, table] = extend_weight_table(plan.shells, plan.table, estimator, config.max_M, config.workers);
      plan = ComponentPlan{std::move(grown), std::move(table)};
      ++out.extensions;
    }
  }

  out.draws.resize(K);
  parallel_for(K, config.workers, [&](std::size_t k) {
    const auto& component = components[comp[k]];
    const auto& plan = component.plan;
    const std::size_t i = shell[k];
    auto draw = perfect_draw(streams[k], *component.target, plan.shells, i, plan.table.estimate(i),
                             config.sampling.d_tilde, config.limits);
    DrawRecord& rec = out.draws[k];
    rec.draw_index = k;
    rec.component = comp[k];
    rec.shell_index = i;
    rec.t_coalesce = draw.t_coalesce;
    rec.mh_trials = draw.mh_trials;
    rec.residual_rejections = draw.residual_rejections;
    rec.theta = output_target.pull_back(draw.theta0);
  });

  for (auto& c : components) {
    out.final_M = std::max(out.final_M, c.plan.table.M());
    out.plans.push_back(std::move(c.plan));
  }
  return out;
}

}  // namespace

void RunConfig::validate() const {
  if (workers == 0) config_error("workers must be positive");
  if (K == 0) config_error("K must be positive");
  if (n_per_shell < 2) config_error("shells.n must be at least 2");
  if (M == 0) config_error("shells.M must be positive");
  if (!(r > 0.0) || !std::isfinite(r)) config_error("shells.r must be positive");
  if (!(a > 0.0) || !std::isfinite(a)) config_error("shells.a must be positive");
  if (!(eta >= 0.0 && eta < 1.0)) config_error("shells.eta must lie in [0, 1)");
  if (!(epsilon > 0.0 && epsilon < 1.0)) config_error("shells.epsilon must lie in (0, 1)");
  if (!(sampling.d_tilde > 0.0)) config_error("shells.d_tilde must be positive");
  if (!(sampling.auto_threshold >= 0.0 && sampling.auto_threshold <= 1.0))
    config_error("shells.auto_threshold must lie in [0, 1]");
  if (sampling.max_attempts == 0) config_error("caps.max_shell_attempts must be positive");
  if (flatten_b && !(*flatten_b > 0.0)) config_error("flatten.b must be positive");
  if (limits.t_max == 0) config_error("caps.t_max must be positive");
  if (limits.max_residual_trials == 0) config_error("caps.max_residual_trials must be positive");
  if (max_M < M) config_error("caps.max_M must be at least shells.M");
}

nlohmann::json to_json(const RunConfig& c) {
  json doc;
  doc["seed"] = c.seed;
  doc["workers"] = c.workers;
  doc["K"] = c.K;
  doc["shells"] = {{"n", c.n_per_shell},
                   {"M", c.M},
                   {"r", c.r},
                   {"a", c.a},
                   {"eta", c.eta},
                   {"epsilon", c.epsilon},
                   {"mode", to_string(c.sampling.policy)},
                   {"d_tilde", c.sampling.d_tilde},
                   {"auto_threshold", c.sampling.auto_threshold}};
  doc["flatten"] = c.flatten_b ? json{{"b", *c.flatten_b}, {"jacobian", to_string(c.jacobian)}} : json(nullptr);
  doc["caps"] = {{"t_max", c.limits.t_max},
                 {"max_residual_trials", c.limits.max_residual_trials},
                 {"max_M", c.max_M},
                 {"max_shell_attempts", c.sampling.max_attempts}};
  return doc;
}

double effective_eta(const RunConfig& config, ShellMode mode) {
  return mode == ShellMode::ThinShell ? 0.0 : config.eta;
}

ShellSystem make_shell_system(const RunConfig& config, const Vector& mu, const Matrix& sigma) {
  return ShellSystem::build(mu, sigma, schedule_radii(config.r, config.a, config.M));
}

ShellEstimate estimate_shell_for_run(const RunConfig& config, const TargetModel& target, const ShellSystem& shells,
                                     std::size_t i, std::size_t lane) {
  auto rng = derive_stream(config.seed, StreamPurpose::ShellEstimate, i, lane);
  const ShellMode mode = shells.resolve_mode(i, config.sampling);
  return estimate_shell(rng, target, shells, i, config.n_per_shell, effective_eta(config, mode), mode,
                        config.sampling.d_tilde, config.sampling.max_attempts);
}

WeightTable estimate_weights_parallel(const RunConfig& config, const TargetModel& target, const ShellSystem& shells,
                                      std::size_t lane) {
  config.validate();
  std::vector<ShellEstimate> estimates(shells.M());
  parallel_for(shells.M(), config.workers,
               [&](std::size_t k) { estimates[k] = estimate_shell_for_run(config, target, shells, k + 1, lane); });
  auto table = build_weight_table(std::move(estimates), config.epsilon);
  if (table.log_total() == kNegInf) fail(ErrorCode::DegenerateTarget, "every shell has zero estimated mass");
  return table;
}

SampleSet sample_iid(const RunConfig& config, const TargetModel& target, const ShellSystem& shells,
                     const WeightTable& table) {
  if (table.M() != shells.M()) fail(ErrorCode::InvalidArgument, "weight table does not match the shell system");
  return run_sampler(config, target, {Component{&target, ComponentPlan{shells, table}}}, {});
}

SampleSet sample_iid_mixture(const RunConfig& config, const TargetModel& target, std::vector<ComponentPlan> plans) {
  if (!target.is_mixture()) fail(ErrorCode::InvalidMixture, "target is not a mixture");
  const auto& parts = target.mixture();
  if (plans.size() != parts.size()) fail(ErrorCode::InvalidMixture, "need one plan per mixture component");
  std::vector<Component> components;
  std::vector<double> weights;
  for (std::size_t c = 0; c < parts.size(); ++c) {
    components.push_back({&parts[c].model, std::move(plans[c])});
    weights.push_back(parts[c].weight);
  }
  return run_sampler(config, target, std::move(components), weights);
}

std::vector<ComponentPlan> plan_mixture(const RunConfig& config, const TargetModel& target) {
  if (!target.is_mixture()) fail(ErrorCode::InvalidMixture, "target is not a mixture");
  std::vector<ComponentPlan> plans;
  const auto& parts = target.mixture();
  for (std::size_t c = 0; c < parts.size(); ++c) {
    const auto& shape = parts[c].model.shape();
    if (!shape) fail(ErrorCode::Unsupported, "mixture component has no location/scale");
    auto shells = make_shell_system(config, shape->loc, shape->scale);
    auto table = estimate_weights_parallel(config, parts[c].model, shells, c);
    plans.push_back({std::move(shells), std::move(table)});
  }
  return plans;
}

nlohmann::json checkpoint_to_json(const WeightCheckpoint& cp) {
  if (cp.plans.empty()) fail(ErrorCode::EmptyTable, "checkpoint has no components");
  if (cp.mixture_weights.empty()) {
    if (cp.plans.size() != 1) fail(ErrorCode::InvalidArgument, "multi-component checkpoint needs mixture weights");
    return plan_to_json(cp.plans.front(), cp);
  }
  if (cp.mixture_weights.size() != cp.plans.size())
    fail(ErrorCode::InvalidArgument, "need one mixture weight per component");
  json doc;
  doc["mixture_weights"] = json::array();
  for (double w : cp.mixture_weights) doc["mixture_weights"].push_back(encode(w));
  doc["components"] = json::array();
  for (const auto& p : cp.plans) doc["components"].push_back(plan_to_json(p, cp));
  return doc;
}

WeightCheckpoint checkpoint_from_json(const nlohmann::json& doc) {
  WeightCheckpoint cp;
  try {
    if (doc.contains("components")) {
      for (const auto& w : doc.at("mixture_weights")) cp.mixture_weights.push_back(decode(w));
      for (const auto& c : doc.at("components")) cp.plans.push_back(plan_from_json(c, cp));
      if (cp.mixture_weights.size() != cp.plans.size())
        fail(ErrorCode::DataError, "checkpoint mixture weights do not match its components");
    } else {
      cp.plans.push_back(plan_from_json(doc, cp));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::DataError, std::string("malformed weight checkpoint: ") + e.what());
  }
  return cp;
}

void write_checkpoint(const std::filesystem::path& path, const WeightCheckpoint& checkpoint) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::DataError, "cannot write " + path.string());
  out << checkpoint_to_json(checkpoint).dump(1) << '\n';
}

WeightCheckpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::MissingArtifact, "cannot read " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::DataError, path.string() + ": " + e.what());
  }
  return checkpoint_from_json(doc);
}

void write_samples_csv(const std::filesystem::path& path, const SampleSet& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::DataError, "cannot write " + path.string());
  const std::size_t d = samples.draws.empty() ? 0 : static_cast<std::size_t>(samples.draws.front().theta.size());
  out << "draw_index,shell_index,t_coalesce";
  for (std::size_t j = 0; j < d; ++j) out << ",theta_" << j;
  out << '\n';
  for (const auto& r : samples.draws) {
    out << r.draw_index << ',' << r.shell_index << ',' << r.t_coalesce;
    for (double v : r.theta) out << ',' << format_double(v);
    out << '\n';
  }
  if (samples.mixture) {
    auto side = path.parent_path() / (path.stem().string() + "_components.csv");
    std::ofstream comp(side, std::ios::binary);
    if (!comp) fail(ErrorCode::DataError, "cannot write " + side.string());
    comp << "draw_index,component\n";
    for (const auto& r : samples.draws) comp << r.draw_index << ',' << r.component << '\n';
  }
}

SampleRows read_samples_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::MissingArtifact, "cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::DataError, path.string() + ": empty file");
  const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (columns < 4 || line.rfind("draw_index,shell_index,t_coalesce,theta_0", 0) != 0)
    fail(ErrorCode::DataError, path.string() + ": unexpected header");
  const std::size_t d = columns - 3;

  SampleRows rows;
  std::vector<std::vector<double>> theta;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != columns)
      fail(ErrorCode::DataError, path.string() + ": row " + std::to_string(line_no) + " has the wrong field count");
    try {
      rows.draw_index.push_back(std::stoull(cells[0]));
      rows.shell_index.push_back(std::stoull(cells[1]));
      rows.t_coalesce.push_back(std::stoull(cells[2]));
      std::vector<double> v;
      for (std::size_t j = 0; j < d; ++j) v.push_back(std::stod(cells[3 + j]));
      theta.push_back(std::move(v));
    } catch (const std::exception&) {
      fail(ErrorCode::DataError, path.string() + ": row " + std::to_string(line_no) + " is not numeric");
    }
  }
  rows.theta.resize(static_cast<Eigen::Index>(theta.size()), static_cast<Eigen::Index>(d));
  for (std::size_t k = 0; k < theta.size(); ++k)
    for (std::size_t j = 0; j < d; ++j)
      rows.theta(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = theta[k][j];
  rows.component.assign(theta.size(), 0);

  auto side = path.parent_path() / (path.stem().string() + "_components.csv");
  if (std::ifstream comp{side}) {
    std::getline(comp, line);
    std::size_t k = 0;
    while (std::getline(comp, line) && k < rows.component.size()) {
      if (line.empty()) continue;
      rows.component[k++] = std::stoull(line.substr(line.find(',') + 1));
    }
  }
  return rows;
}

Matrix sample_matrix(const SampleSet& samples) {
  if (samples.draws.empty()) return {};
  const auto d = samples.draws.front().theta.size();
  Matrix m(static_cast<Eigen::Index>(samples.draws.size()), d);
  for (std::size_t k = 0; k < samples.draws.size(); ++k) m.row(static_cast<Eigen::Index>(k)) = samples.draws[k].theta;
  return m;
}

std::string library_version() { return IIDSHELL_VERSION; }

}  // namespace iidshell
