#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ehpolicy::detail {

/// Runs body(worker, begin, end) over [0, n) in chunks on up to `threads`
/// workers. The first exception thrown by any worker is rethrown here.
template <class Body>
void parallel_chunks(std::size_t n, int threads, std::size_t chunk, Body&& body) {
    if (n == 0) return;
    chunk = std::max<std::size_t>(chunk, 1);
    const auto workers = static_cast<int>(
        std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1,
                                (n + chunk - 1) / chunk));
    if (workers == 1) {
        body(0, std::size_t{0}, n);
        return;
    }
    std::atomic<std::size_t> cursor{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto run = [&](int worker) {
        try {
            for (;;) {
                const std::size_t begin = cursor.fetch_add(chunk);
                if (begin >= n) return;
                body(worker, begin, std::min(n, begin + chunk));
            }
        } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            cursor.store(n);
        }
    };
    std::vector<std::jthread> pool;
    for (int w = 1; w < workers; ++w) pool.emplace_back(run, w);
    run(0);
    pool.clear();
    if (error) std::rethrow_exception(error);
}

}  // namespace ehpolicy::detail
