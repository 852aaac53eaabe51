#include "iidshell/rng.hpp"

#include <array>

namespace iidshell {
namespace {

std::mt19937_64 seeded_engine(std::uint64_t seed, std::uint32_t purpose, std::uint64_t counter,
                              std::uint64_t lane) {
  std::array<std::uint32_t, 7> key{
      static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
      purpose,
      static_cast<std::uint32_t>(counter), static_cast<std::uint32_t>(counter >> 32),
      static_cast<std::uint32_t>(lane), static_cast<std::uint32_t>(lane >> 32)};
  std::seed_seq seq(key.begin(), key.end());
  return std::mt19937_64(seq);
}

}  // namespace

RandomStream::RandomStream(std::uint64_t seed) : RandomStream(seed, StreamPurpose::Test, 0) {}

RandomStream::RandomStream(std::uint64_t seed, StreamPurpose purpose, std::uint64_t counter,
                           std::uint64_t lane)
    : engine_(seeded_engine(seed, static_cast<std::uint32_t>(purpose), counter, lane)) {}

}  // namespace iidshell
