#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace iidshell {

/// What a stream is used for. Part of the stream key, so streams for
/// different purposes never share state even with equal counters.
enum class StreamPurpose : std::uint32_t {
  ShellEstimate = 1,
  Draw = 2,
  Pilot = 3,
  Test = 99,
};

/// A reproducible stream of uniform and normal variates.
///
/// Streams are identified by a key, never by the thread that consumes them,
/// so any scheduling of work across workers yields identical output.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  explicit RandomStream(std::uint64_t seed);
  RandomStream(std::uint64_t seed, StreamPurpose purpose, std::uint64_t counter,
               std::uint64_t lane = 0);

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() { return normal_(engine_); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

/// Stream keyed by (seed, purpose, counter, lane). Same key, same stream.
inline RandomStream derive_stream(std::uint64_t seed, StreamPurpose purpose,
                                  std::uint64_t counter, std::uint64_t lane = 0) {
  return RandomStream(seed, purpose, counter, lane);
}

}  // namespace iidshell
