#pragma once

#include <cstddef>
#include <exception>
#include <vector>

namespace iidshell {

/// Runs body(k) for k in [0, n) on up to `workers` threads. If any call
/// throws, the exception from the lowest index is rethrown after the loop.
template <typename Body>
void parallel_for(std::size_t n, std::size_t workers, Body&& body) {
  std::vector<std::exception_ptr> errors(n);
  const long long count = static_cast<long long>(n);
  const int threads = workers == 0 ? 1 : static_cast<int>(workers);
#pragma omp parallel for num_threads(threads) schedule(dynamic, 1)
  for (long long k = 0; k < count; ++k) {
    try {
      body(static_cast<std::size_t>(k));
    } catch (...) {
      errors[static_cast<std::size_t>(k)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace iidshell
