#pragma once

#include <exception>
#include <mutex>

namespace awada {

/// Runs fn(i) for i in [0, n) across OpenMP threads. Iterations must write
/// disjoint state. The first exception thrown by any iteration is rethrown
/// on the calling thread once the loop finishes.
template <typename Fn>
void parallel_for(int n, Fn&& fn) {
  std::exception_ptr error;
  std::mutex guard;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    try {
      fn(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(guard);
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace awada
