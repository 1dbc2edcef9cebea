#include "mk/parallel.hpp"

#include <omp.h>

namespace mk {

namespace {
int g_default = -1;
}

void set_thread_limit(int n) {
    if (g_default < 0) g_default = omp_get_max_threads();
    omp_set_num_threads(n >= 1 ? n : g_default);
}

int thread_limit() { return omp_get_max_threads(); }

}  // namespace mk
