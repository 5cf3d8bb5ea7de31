#include "boltpipe/parallel.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace boltpipe {
namespace {
#ifdef _OPENMP
const int g_default_threads = omp_get_max_threads();
#endif
} // namespace

void set_thread_count(int threads) {
#ifdef _OPENMP
    omp_set_num_threads(threads > 0 ? threads : g_default_threads);
#else
    (void)threads;
#endif
}

int thread_count() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

} // namespace boltpipe
