#include "iidshell/datasets.hpp"
#include "iidshell/error.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

using namespace iidshell;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& text) {
  const fs::path dir = fs::temp_directory_path() / "iidshell_unit_datasets";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream(p) << text;
  return p;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Internal;
}

}  // namespace

TEST_CASE("bundled challenger data") {
  const auto data = load_bundled_challenger();
  CHECK(data.records.size() == 23);
  int failures = 0;
  for (const auto& r : data.records) {
    CHECK((r.failure == 0 || r.failure == 1));
    CHECK(r.temperature_f > 0.0);
    failures += r.failure;
  }
  CHECK(failures == 7);
}

TEST_CASE("bundled salmonella data") {
  const auto data = load_bundled_salmonella();
  CHECK(data.records.size() == 18);
  std::set<double> doses;
  for (const auto& r : data.records) {
    doses.insert(r.dose);
    CHECK(r.colonies >= 0);
  }
  CHECK(doses.size() == 6);
}

TEST_CASE("schema errors carry the row") {
  const auto trunc = write_temp("trunc.csv", "flight,temperature_F,failure\n1,66,0\n2,70\n");
  try {
    load_challenger(trunc);
    FAIL("expected DataError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DataError);
    CHECK(std::string(e.what()).find('3') != std::string::npos);
  }
  const auto header = write_temp("header.csv", "flight,temp,failure\n1,66,0\n");
  CHECK(code_of([&] { load_challenger(header); }) == ErrorCode::DataError);
  const auto bad_failure = write_temp("badfail.csv", "flight,temperature_F,failure\n1,66,2\n");
  CHECK(code_of([&] { load_challenger(bad_failure); }) == ErrorCode::DataError);
  const auto salm = write_temp("salm.csv", "dose,plate,colonies\n0,1,15\n10,x,16\n");
  CHECK(code_of([&] { load_salmonella(salm); }) == ErrorCode::DataError);
  CHECK(code_of([&] { load_salmonella("/nonexistent/salmonella.csv"); }) == ErrorCode::DataError);
  const auto empty = write_temp("empty.csv", "");
  CHECK(code_of([&] { load_challenger(empty); }) == ErrorCode::DataError);
}
