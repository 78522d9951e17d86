#pragma once

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rsdcm::par {

inline int max_jobs() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

// Runs f(i) for i in [0, n). jobs <= 1 selects the serial reference path;
// otherwise the loop is OpenMP-parallel. Work items must be independent and
// write only to their own slot, so results are identical on both paths.
template <class F>
void for_index(int n, int jobs, F&& f) {
    if (jobs <= 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(jobs)
    for (int i = 0; i < n; ++i) f(i);
#else
    for (int i = 0; i < n; ++i) f(i);
#endif
}

}  // namespace rsdcm::par
