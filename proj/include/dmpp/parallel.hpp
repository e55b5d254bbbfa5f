#pragma once

#include <cstddef>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dmpp {

// Reductions here must give the same result on every run for a fixed thread
// count: partial sums are accumulated per thread over a static partition and
// merged in thread order, never in arrival order.

template <class Body>
double ordered_sum(std::size_t n, Body body) {
#ifdef _OPENMP
  const int max_threads = omp_get_max_threads();
  std::vector<double> partial(static_cast<std::size_t>(max_threads), 0.0);
#pragma omp parallel
  {
    const int tid = omp_get_thread_num();
    double acc = 0.0;
#pragma omp for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
      acc += body(static_cast<std::size_t>(i));
    }
    partial[static_cast<std::size_t>(tid)] = acc;
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
#else
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += body(i);
  return total;
#endif
}

template <class Body>
void parallel_for(std::size_t n, Body body) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    body(static_cast<std::size_t>(i));
  }
#else
  for (std::size_t i = 0; i < n; ++i) body(i);
#endif
}

inline int worker_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline int worker_id() {
#ifdef _OPENMP
  return omp_get_thread_num();
#else
  return 0;
#endif
}

}  // namespace dmpp
