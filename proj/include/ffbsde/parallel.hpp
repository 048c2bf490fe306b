#pragma once

#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace ffbsde {

inline int resolve_workers(int requested) {
    if (requested > 0) return requested;
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

/// Runs fn(i) for i in [begin, end) on up to `workers` threads. Tasks must
/// write to disjoint state; the result must not depend on the decomposition.
/// The first exception thrown by any task is rethrown on the caller.
inline void parallel_for(int begin, int end, int workers,
                         const std::function<void(int)>& fn) {
    const int count = end - begin;
    if (count <= 0) return;
    workers = std::min(resolve_workers(workers), count);
    if (workers <= 1) {
        for (int i = begin; i < end; ++i) fn(i);
        return;
    }

    std::mutex err_mutex;
    std::exception_ptr first_error;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            // Block decomposition: contiguous ranges, remainder spread left.
            const int base = count / workers, rem = count % workers;
            const int lo = begin + w * base + std::min(w, rem);
            const int hi = lo + base + (w < rem ? 1 : 0);
            for (int i = lo; i < hi; ++i) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace ffbsde
