#include "iidshell/cli.hpp"
#include "iidshell/error.hpp"

#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace iidshell;
namespace fs = std::filesystem;

namespace {

struct Run {
  int status;
  std::string output;
};

// Runs the shipped binary with stderr folded into the captured output.
Run run_cli(const std::string& args) {
  const std::string cmd = std::string(IIDSHELL_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) out += buf.data();
  const int raw = pclose(pipe);
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, out};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "iidshell_unit_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
  return p;
}

ErrorCode parse_error(const std::string& text, std::string* message = nullptr) {
  try {
    parse_config(text, "cfg.json");
  } catch (const Error& e) {
    if (message) *message = e.what();
    return e.code();
  }
  return ErrorCode::Internal;
}

const char* kMinimal = R"({
  "target": {"kind": "normal", "d": 1},
  "seed": 3,
  "K": 10
})";

}  // namespace

TEST_CASE("minimal config gets the documented defaults") {
  const auto c = parse_config(kMinimal);
  CHECK(c.run.seed == 3);
  CHECK(c.run.K == 10);
  CHECK(c.run.eta == 1e-5);
  CHECK(c.run.epsilon == 1e-3);
  CHECK(c.run.sampling.d_tilde == 1e5);
  CHECK(c.run.limits.t_max == 10'000'000);
  CHECK(c.source == ShellSource::Target);
}

TEST_CASE("config errors name the line") {
  std::string msg;
  const std::string unknown = "{\n  \"target\": {\"kind\": \"normal\", \"d\": 1},\n  \"foo\": 1\n}";
  CHECK(parse_error(unknown, &msg) == ErrorCode::ConfigError);
  CHECK(msg.find("cfg.json:3") != std::string::npos);
  CHECK(msg.find("foo") != std::string::npos);

  CHECK(parse_error("{\n  \"target\": {\"kind\": \"normal\", \"d\": 1},\n  \"K\": 0\n}", &msg) ==
        ErrorCode::ConfigError);
  CHECK(parse_error("{\n \"target\": {\"kind\": \"normal\", \"d\": 1,}\n}", &msg) == ErrorCode::ConfigError);
  CHECK(msg.find("cfg.json:2") != std::string::npos);
  CHECK(parse_error(R"({"target": {"kind": "weibull", "d": 1}})") == ErrorCode::ConfigError);
  CHECK(parse_error(R"({"target": {"kind": "normal", "d": 1}, "shells": {"mode": "spiral"}})") ==
        ErrorCode::ConfigError);
  CHECK(parse_error(R"({"target": {"kind": "normal", "d": 2}, "flatten": {"b": 0.1}})") == ErrorCode::ConfigError);
  CHECK(parse_error(R"({"seed": 1})") == ErrorCode::ConfigError);
}

TEST_CASE("presets") {
  const auto p = load_preset("normal-d100");
  CHECK(p.run.r == 4.0);
  CHECK(p.run.a == 0.5);
  CHECK(p.run.M == 71);
  CHECK(p.run.n_per_shell == 10000);
  CHECK(p.run.eta == 1e-5);
  CHECK(build_target(p).dimension() == 100);

  const auto ch = load_preset("challenger");
  CHECK(ch.run.r == 2.0);
  CHECK(ch.run.a == 0.02);
  CHECK(ch.run.M == 85);
  REQUIRE(ch.pilot.has_value());
  CHECK(ch.pilot->scales[0] == 7.944);
  CHECK(ch.pilot->scales[1] == 9.762);
  CHECK(ch.pilot->options.n_iter == 200000);
  CHECK(ch.pilot->options.burn_in == 100000);

  const auto sa = load_preset("salmonella");
  REQUIRE(sa.pilot.has_value());
  CHECK(sa.pilot->scales[2] == 0.00024192);

  for (const auto& name : preset_names()) CHECK_NOTHROW(build_sampling_target(load_preset(name)));
  CHECK_THROWS_AS(load_preset("nope"), Error);
}

TEST_CASE("verbs") {
  CHECK(parse_verb("sample") == Verb::Sample);
  CHECK(std::string(to_string(Verb::All)) == "all");
  CHECK_THROWS_AS(parse_verb("resample"), Error);
}

TEST_CASE("sample without weights is a missing artifact") {
  const auto dir = fresh_dir("missing");
  const auto r = run_cli("sample --preset normal-d1-desk --out-dir " + dir.string());
  CHECK(r.status == 2);
  CHECK(r.output.rfind("ERROR MissingArtifact:", 0) == 0);
  CHECK(r.output.find("weights") != std::string::npos);

  CliCommand cmd;
  cmd.verb = Verb::Sample;
  cmd.preset = "normal-d1-desk";
  cmd.out_dir = dir;
  std::ostringstream log;
  try {
    run_pipeline(cmd, log);
    FAIL("expected MissingArtifact");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingArtifact);
  }
}

TEST_CASE("end-to-end run on the one-dimensional normal preset") {
  const auto dir = fresh_dir("all");
  const auto r = run_cli("all --preset normal-d1-desk --out-dir " + dir.string());
  INFO(r.output);
  REQUIRE(r.status == 0);
  for (const char* f : {"weights.json", "samples.csv", "report.json", "manifest.json"})
    CHECK(fs::exists(dir / f));
  const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
  CHECK(report["pass"]["all"] == true);
  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest.contains("version"));
  CHECK(manifest["config"]["K"] == 1000);

  const auto again = fresh_dir("all_again");
  REQUIRE(run_cli("all --preset normal-d1-desk --workers 3 --out-dir " + again.string()).status == 0);
  CHECK(slurp(dir / "samples.csv") == slurp(again / "samples.csv"));
  CHECK(slurp(dir / "weights.json") == slurp(again / "weights.json"));

  const auto reseeded = fresh_dir("all_seed");
  REQUIRE(run_cli("all --preset normal-d1-desk --seed 99 --out-dir " + reseeded.string()).status == 0);
  CHECK(slurp(dir / "samples.csv") != slurp(reseeded / "samples.csv"));
  CHECK(slurp(dir / "weights.json") != slurp(reseeded / "weights.json"));

  const auto rep = run_cli("report --preset normal-d1-desk --out-dir " + dir.string());
  CHECK(rep.status == 0);
  CHECK(rep.output.find("PASS") != std::string::npos);
}

TEST_CASE("staged run matches the chained run") {
  const auto dir = fresh_dir("staged");
  const std::string common = " --preset t5-d1-desk --draws 300 --out-dir " + dir.string();
  REQUIRE(run_cli("weights" + common).status == 0);
  REQUIRE(run_cli("sample" + common).status == 0);
  const auto chained = fresh_dir("chained");
  REQUIRE(run_cli("all --preset t5-d1-desk --draws 300 --out-dir " + chained.string()).status == 0);
  CHECK(slurp(dir / "samples.csv") == slurp(chained / "samples.csv"));
}

TEST_CASE("error paths exit with their class and a single prefixed line") {
  const auto dir = fresh_dir("errors");
  const auto bad = write_file(dir / "bad.json", "{\n  \"target\": {\"kind\": \"normal\", \"d\": 1},\n  \"foo\": 2\n}\n");
  auto r = run_cli("weights --config " + bad.string() + " --out-dir " + (dir / "o1").string());
  CHECK(r.status == 2);
  CHECK(r.output.rfind("ERROR ConfigError:", 0) == 0);
  CHECK(r.output.find('\n') == r.output.size() - 1);

  r = run_cli("weights --config " + (dir / "absent.json").string());
  CHECK(r.status == 2);
  CHECK(r.output.rfind("ERROR ConfigError:", 0) == 0);

  r = run_cli("frobnicate --preset normal-d1-desk");
  CHECK(r.status == 2);
  CHECK(r.output.rfind("ERROR ", 0) == 0);

  write_file(dir / "broken.csv", "flight,temperature_F,failure\n1,66\n");
  const auto data_cfg = write_file(
      dir / "data.json",
      R"({"target": {"kind": "challenger", "data": "broken.csv"}, "shells": {"source": "pilot"},
          "pilot": {"scales": [7.944, 9.762], "n_iter": 2000, "burn_in": 1000}})");
  r = run_cli("pilot --config " + data_cfg.string() + " --out-dir " + (dir / "o2").string());
  CHECK(r.status == 3);
  CHECK(r.output.rfind("ERROR DataError:", 0) == 0);

  const auto num_cfg = write_file(dir / "num.json", R"({"target": {"kind": "normal", "d": 5}, "K": 200,
      "shells": {"n": 200, "M": 30, "r": 1.0, "a": 0.5}, "caps": {"t_max": 1}})");
  r = run_cli("all --config " + num_cfg.string() + " --out-dir " + (dir / "o3").string());
  CHECK(r.status == 4);
  const auto last = r.output.rfind('\n', r.output.size() - 2);
  CHECK(r.output.compare(last + 1, 27, "ERROR MinorizationTooSmall:") == 0);
}
