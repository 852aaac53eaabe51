#pragma once

#include "iidshell/target.hpp"

#include <filesystem>
#include <string_view>

namespace iidshell {

/// Directory holding the CSV files shipped with the library.
std::filesystem::path bundled_data_dir();

/// Reads `flight,temperature_F,failure`. Throws DataError naming the
/// offending row on any schema mismatch.
ChallengerDataset load_challenger(const std::filesystem::path& path);

/// Reads `dose,plate,colonies`.
SalmonellaDataset load_salmonella(const std::filesystem::path& path);

ChallengerDataset load_bundled_challenger();
SalmonellaDataset load_bundled_salmonella();

}  // namespace iidshell
