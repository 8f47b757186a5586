// Copyright 2026 The ava-nvs Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ava::util {

// Caps the OpenMP worker count for the whole process. 0 keeps the runtime default
// (physical cores). All parallel loops assign each output element to exactly one
// thread, so results are identical for every thread count.
inline void set_thread_count(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

inline int thread_count() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace ava::util
