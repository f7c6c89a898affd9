#include "r3d/parallel.h"

#include <omp.h>

namespace r3d {

namespace {
int g_num_threads = 0;
}

int num_threads() { return g_num_threads > 0 ? g_num_threads : omp_get_max_threads(); }

void set_num_threads(int n) { g_num_threads = n > 0 ? n : 0; }

namespace detail {

void parallel_for_impl(std::ptrdiff_t count, void* ctx, void (*fn)(void*, std::ptrdiff_t)) {
    const int threads = num_threads();
    if (count <= 0) return;
    if (threads <= 1 || count == 1 || omp_in_parallel()) {
        for (std::ptrdiff_t i = 0; i < count; ++i) fn(ctx, i);
        return;
    }
#pragma omp parallel for schedule(dynamic, 64) num_threads(threads)
    for (std::ptrdiff_t i = 0; i < count; ++i) fn(ctx, i);
}

}  // namespace detail
}  // namespace r3d
