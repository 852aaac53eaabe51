#include "iidshell/datasets.hpp"

#include "iidshell/error.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#ifndef IIDSHELL_DATA_DIR
#define IIDSHELL_DATA_DIR "data"
#endif

namespace iidshell {
namespace {

struct CsvRows {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

CsvRows read_csv(const std::filesystem::path& path, const std::vector<std::string>& header) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::DataError, "cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  bool seen_header = false;
  CsvRows out;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split(line);
    if (!seen_header) {
      if (!cells.empty() && cells[0].rfind("\xEF\xBB\xBF", 0) == 0) cells[0].erase(0, 3);
      if (cells != header) fail(ErrorCode::DataError, path.string() + ": unexpected header on row 1");
      seen_header = true;
      continue;
    }
    if (cells.size() != header.size()) {
      fail(ErrorCode::DataError, path.string() + ": row " + std::to_string(line_no) + " has " +
                                     std::to_string(cells.size()) + " fields, expected " +
                                     std::to_string(header.size()));
    }
    out.rows.push_back(std::move(cells));
    out.line_numbers.push_back(line_no);
  }
  if (!seen_header) fail(ErrorCode::DataError, path.string() + ": empty file");
  if (out.rows.empty()) fail(ErrorCode::DataError, path.string() + ": no data rows");
  return out;
}

template <typename T>
T parse_field(const std::string& cell, const std::filesystem::path& path, std::size_t line_no,
              const char* column) {
  T value{};
  const auto* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    fail(ErrorCode::DataError, path.string() + ": row " + std::to_string(line_no) + ": bad " +
                                   column + " value '" + cell + "'");
  }
  return value;
}

}  // namespace

std::filesystem::path bundled_data_dir() {
  if (const char* env = std::getenv("IIDSHELL_DATA_DIR"); env != nullptr && *env != '\0') return env;
  return IIDSHELL_DATA_DIR;
}

ChallengerDataset load_challenger(const std::filesystem::path& path) {
  const auto csv = read_csv(path, {"flight", "temperature_F", "failure"});
  ChallengerDataset data;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    const auto line = csv.line_numbers[r];
    ChallengerRecord rec{parse_field<int>(row[0], path, line, "flight"),
                         parse_field<double>(row[1], path, line, "temperature_F"),
                         parse_field<int>(row[2], path, line, "failure")};
    if (rec.failure != 0 && rec.failure != 1)
      fail(ErrorCode::DataError, path.string() + ": row " + std::to_string(line) + ": failure must be 0 or 1");
    data.records.push_back(rec);
  }
  return data;
}

SalmonellaDataset load_salmonella(const std::filesystem::path& path) {
  const auto csv = read_csv(path, {"dose", "plate", "colonies"});
  SalmonellaDataset data;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    const auto line = csv.line_numbers[r];
    SalmonellaRecord rec{parse_field<double>(row[0], path, line, "dose"),
                         parse_field<int>(row[1], path, line, "plate"),
                         parse_field<int>(row[2], path, line, "colonies")};
    if (rec.dose < 0.0 || rec.colonies < 0)
      fail(ErrorCode::DataError, path.string() + ": row " + std::to_string(line) + ": negative value");
    data.records.push_back(rec);
  }
  return data;
}

ChallengerDataset load_bundled_challenger() { return load_challenger(bundled_data_dir() / "challenger.csv"); }

SalmonellaDataset load_bundled_salmonella() { return load_salmonella(bundled_data_dir() / "salmonella.csv"); }

}  // namespace iidshell
