#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace cvh {

// Worker count used by the kernels. Defaults to 1. Results never depend on it:
// work is split over disjoint outputs and each output keeps a fixed reduction order.
void set_num_threads(unsigned count);
unsigned num_threads();

// Calls fn(begin, end) over contiguous chunks of [0, n).
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(num_threads(), n);
    if (workers <= 1) {
        if (n > 0) fn(std::size_t{0}, n);
        return;
    }
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    fn(std::size_t{0}, std::min(n, chunk));
}

} // namespace cvh
