#pragma once

#include <utility>

#ifdef FDAREG_HAVE_OPENMP
#include <omp.h>
#endif

namespace fdareg::par {

inline int max_threads() {
#ifdef FDAREG_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline bool openmp_enabled() {
#ifdef FDAREG_HAVE_OPENMP
  return true;
#else
  return false;
#endif
}

// Runs fn(i) for i in [0, n).  The parallel path requires fn to touch only
// per-index state; the serial path is the reference used in tests.
template <typename F>
void for_each_index(int n, bool parallel, F&& fn) {
#ifdef FDAREG_HAVE_OPENMP
  if (parallel && n > 1) {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
#else
  (void)parallel;
#endif
  for (int i = 0; i < n; ++i) fn(i);
}

}  // namespace fdareg::par
