#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace splatloc {

namespace detail {
inline int& worker_thread_storage() {
    static int value = 0;
    return value;
}
}  // namespace detail

// Process-wide worker count, set once by the CLI. 0 means hardware concurrency.
inline void set_worker_threads(int n) { detail::worker_thread_storage() = n; }

inline int worker_threads() {
    int n = detail::worker_thread_storage();
    if (n > 0) return n;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(block_index, begin, end) over fixed-size blocks. Blocks are defined
// by block_size alone, so per-block partial results reduced in block order
// give bit-identical totals regardless of the worker count.
inline void parallel_blocks(std::size_t n, std::size_t block_size,
                            const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    const std::size_t blocks = (n + block_size - 1) / block_size;
    const int workers = static_cast<int>(std::min<std::size_t>(worker_threads(), blocks));
    if (workers <= 1) {
        for (std::size_t b = 0; b < blocks; ++b)
            fn(b, b * block_size, std::min(n, (b + 1) * block_size));
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t b = static_cast<std::size_t>(w); b < blocks; b += workers)
                fn(b, b * block_size, std::min(n, (b + 1) * block_size));
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace splatloc
