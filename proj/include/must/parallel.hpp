#pragma once

#include <cstddef>
#include <exception>
#include <vector>

namespace must {

// Runs body(i) for i in [0, n) across OpenMP threads. If any iteration throws,
// the exception from the lowest failing index is rethrown after the loop, so
// the reported failure does not depend on scheduling.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
  std::vector<std::exception_ptr> errors(n);
  const long count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace must
