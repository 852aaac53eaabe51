#include "iidshell/cli.hpp"
#include "iidshell/diffeo.hpp"
#include "iidshell/engine.hpp"
#include "iidshell/error.hpp"
#include "iidshell/target.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace iidshell;

namespace {

py::dict sample_standard(const std::string& kind, const Vector& loc, const Matrix& scale, std::size_t K,
                         std::uint64_t seed, double r, double a, std::size_t M, std::size_t n_per_shell, double eta,
                         std::size_t workers) {
  RunConfig config;
  config.seed = seed;
  config.K = K;
  config.r = r;
  config.a = a;
  config.M = M;
  config.n_per_shell = n_per_shell;
  config.eta = eta;
  config.workers = workers;
  config.validate();

  SampleSet out;
  {
    py::gil_scoped_release release;
    const auto target = make_standard_target(parse_standard_kind(kind), loc, scale);
    const auto shells = make_shell_system(config, loc, scale);
    out = sample_iid(config, target, shells, estimate_weights_parallel(config, target, shells));
  }
  std::vector<std::size_t> shell_index;
  std::vector<std::uint64_t> t_coalesce;
  for (const auto& d : out.draws) {
    shell_index.push_back(d.shell_index);
    t_coalesce.push_back(d.t_coalesce);
  }
  py::dict result;
  result["theta"] = sample_matrix(out);
  result["shell_index"] = shell_index;
  result["t_coalesce"] = t_coalesce;
  result["final_M"] = out.final_M;
  result["extensions"] = out.extensions;
  return result;
}

std::string run(const std::string& verb, std::optional<std::string> preset, std::optional<std::string> config,
                const std::string& out_dir, std::optional<std::uint64_t> seed, std::optional<std::size_t> workers,
                std::optional<std::size_t> draws) {
  CliCommand cmd;
  cmd.verb = parse_verb(verb);
  cmd.preset = std::move(preset);
  if (config) cmd.config_path = *config;
  cmd.out_dir = out_dir;
  cmd.seed = seed;
  cmd.workers = workers;
  cmd.draws = draws;
  std::ostringstream log;
  {
    py::gil_scoped_release release;
    run_pipeline(cmd, log);
  }
  return log.str();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Exact i.i.d. sampling through ellipsoidal shells";

  static PyObject* error_type = py::exception<Error>(m, "IidshellError").inc_ref().ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object cls = py::reinterpret_borrow<py::object>(error_type);
      py::object exc = cls(std::string(to_string(e.code())) + ": " + e.what());
      exc.attr("code") = to_string(e.code());
      exc.attr("exit_status") = exit_status(e.code());
      PyErr_SetObject(error_type, exc.ptr());
    }
  });

  m.def("version", &library_version);
  m.def("preset_names", &preset_names);
  m.def("preset_text", [](const std::string& name) { return preset_text(name); }, py::arg("name"));

  m.def("sample_standard", &sample_standard, py::arg("kind"), py::arg("loc"), py::arg("scale"), py::kw_only(),
        py::arg("K") = 1000, py::arg("seed") = 1, py::arg("r") = 4.0, py::arg("a") = 0.5, py::arg("M") = 71,
        py::arg("n_per_shell") = 10000, py::arg("eta") = 1e-5, py::arg("workers") = 1,
        "K exact draws from a normal, student_t5 or cauchy target.");

  m.def("run", &run, py::arg("verb") = "all", py::kw_only(), py::arg("preset") = py::none(),
        py::arg("config") = py::none(), py::arg("out_dir") = "iidshell_out", py::arg("seed") = py::none(),
        py::arg("workers") = py::none(), py::arg("draws") = py::none(),
        "Run pipeline stages like the command-line tool; returns the progress log.");

  m.def("h_apply", &h_apply, py::arg("b"), py::arg("v"));
  m.def("h_invert", &h_invert, py::arg("b"), py::arg("w"));
  m.def("log_abs_det_grad_h", &log_abs_det_grad_h, py::arg("b"), py::arg("v"));
}
