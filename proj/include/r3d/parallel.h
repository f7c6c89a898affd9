#pragma once

#include <algorithm>
#include <cstddef>
#include <type_traits>
#include <utility>
#include <vector>

namespace r3d {

/// Number of worker threads used by data-parallel loops.
int num_threads();

/// Sets the worker count for subsequent data-parallel loops. `n <= 0` restores
/// the hardware default.
void set_num_threads(int n);

/// Restores the previous worker count on scope exit.
class ScopedNumThreads {
public:
    explicit ScopedNumThreads(int n) : previous_(num_threads()) { set_num_threads(n); }
    ~ScopedNumThreads() { set_num_threads(previous_); }
    ScopedNumThreads(const ScopedNumThreads&) = delete;
    ScopedNumThreads& operator=(const ScopedNumThreads&) = delete;

private:
    int previous_;
};

namespace detail {
void parallel_for_impl(std::ptrdiff_t count, void* ctx, void (*fn)(void*, std::ptrdiff_t));
}

/// Calls `fn(i)` for i in [0, count) across the worker pool. `fn` must only
/// write state owned by index i.
template <typename Fn>
void parallel_for(std::ptrdiff_t count, Fn&& fn) {
    detail::parallel_for_impl(count, &fn, [](void* ctx, std::ptrdiff_t i) {
        (*static_cast<std::remove_reference_t<Fn>*>(ctx))(i);
    });
}

/// Records per block in `deterministic_reduce`. Fixed so that the summation
/// tree does not depend on the worker count.
inline constexpr std::ptrdiff_t kReductionBlock = 256;

/// Sums `accumulate(partial, i)` over i in [0, count).
///
/// Records are split into fixed blocks of kReductionBlock; each block is
/// accumulated serially in index order into a copy of `zero`, then the block
/// partials are combined by a pairwise tree with `combine(a, b)` (a += b).
/// The result is bitwise identical for every thread count.
template <typename T, typename Accumulate, typename Combine>
T deterministic_reduce(std::ptrdiff_t count, const T& zero, Accumulate&& accumulate,
                       Combine&& combine) {
    if (count <= 0) return zero;
    const std::ptrdiff_t blocks = (count + kReductionBlock - 1) / kReductionBlock;
    std::vector<T> partial(static_cast<std::size_t>(blocks), zero);
    parallel_for(blocks, [&](std::ptrdiff_t b) {
        const std::ptrdiff_t begin = b * kReductionBlock;
        const std::ptrdiff_t end = std::min(count, begin + kReductionBlock);
        T& acc = partial[static_cast<std::size_t>(b)];
        for (std::ptrdiff_t i = begin; i < end; ++i) accumulate(acc, i);
    });
    for (std::size_t stride = 1; stride < partial.size(); stride *= 2) {
        for (std::size_t i = 0; i + stride < partial.size(); i += 2 * stride) {
            combine(partial[i], partial[i + stride]);
        }
    }
    return std::move(partial.front());
}

}  // namespace r3d
