#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace cstat {

// Resolves a thread-count request: positive values pass through, zero picks
// the CSTAT_THREADS environment variable if set, else hardware concurrency.
int resolve_threads(int requested);

// Runs fn(i) for i in [0, count) across n_threads workers. Work is handed
// out through an atomic counter, so any index may run on any thread; callers
// must write results into disjoint, preallocated slots so the outcome is
// independent of scheduling. The first exception thrown by any worker is
// rethrown on the calling thread after all workers join.
inline void parallel_for(std::size_t count,
                         int n_threads,
                         const std::function<void(std::size_t)>& fn) {
    if (count == 0) return;
    if (n_threads <= 1 || count == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::size_t workers = static_cast<std::size_t>(n_threads);
    if (workers > count) workers = count;

    std::atomic<std::size_t> cursor{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_lock;

    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            for (;;) {
                if (failed.load()) return;
                std::size_t i = cursor.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> hold(error_lock);
                    if (!first_error) first_error = std::current_exception();
                    failed.store(true);
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace cstat
