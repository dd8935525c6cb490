#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace instrec {

/// Runs fn(i) for i in [0, n) over contiguous blocks on up to `threads`
/// threads. The first exception thrown by any block is rethrown.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::exception_ptr failure;
    std::mutex guard;
    {
        std::vector<std::jthread> pool;
        const std::size_t block = (n + threads - 1) / threads;
        for (unsigned t = 0; t < threads; ++t) {
            const std::size_t b = t * block, e = std::min(n, b + block);
            if (b >= e) break;
            pool.emplace_back([&, b, e] {
                try {
                    for (std::size_t i = b; i < e; ++i) fn(i);
                } catch (...) {
                    std::lock_guard lock(guard);
                    if (!failure) failure = std::current_exception();
                }
            });
        }
    }
    if (failure) std::rethrow_exception(failure);
}

inline unsigned hardware_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

}  // namespace instrec
