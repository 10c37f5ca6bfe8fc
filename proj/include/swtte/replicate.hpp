#pragma once

// Replicate loops for Monte Carlo work (simulated power, bootstrap,
// permutation). Every replicate derives its own RNG stream from its index,
// so the OpenMP runner and the serial reference produce identical output
// regardless of thread count or scheduling.

#include <cstddef>
#include <exception>
#include <type_traits>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace swtte {

template <class Fn>
auto run_replicates_serial(std::size_t n, Fn&& fn) {
  using R = std::invoke_result_t<Fn&, std::size_t>;
  std::vector<R> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(fn(i));
  return out;
}

/// Parallel runner. R must be default constructible. If any replicate
/// throws, the exception from the lowest failing index is rethrown.
template <class Fn>
auto run_replicates_parallel(std::size_t n, Fn&& fn) {
  using R = std::invoke_result_t<Fn&, std::size_t>;
  static_assert(std::is_default_constructible_v<R>);
  std::vector<R> out(n);
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

template <class Fn>
auto run_replicates(std::size_t n, bool parallel, Fn&& fn) {
  if (parallel) return run_replicates_parallel(n, fn);
  return run_replicates_serial(n, fn);
}

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace swtte
