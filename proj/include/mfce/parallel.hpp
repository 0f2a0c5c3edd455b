#pragma once

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mfce {

// Worker count for the parallel kernels. Default 1 keeps runs reproducible
// byte-for-byte out of the box; kernels are written so that results do not
// depend on the count anyway (disjoint writes, fixed-order reductions).
int num_workers();
void set_num_workers(int n);

template <class F>
void parallel_for(std::int64_t n, F&& body) {
#ifdef _OPENMP
  if (num_workers() > 1 && n > 1) {
#pragma omp parallel for schedule(static) num_threads(num_workers())
    for (std::int64_t i = 0; i < n; ++i) body(i);
    return;
  }
#endif
  for (std::int64_t i = 0; i < n; ++i) body(i);
}

}  // namespace mfce
