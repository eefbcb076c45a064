#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace vcomp {

/// Worker-pool width: hardware concurrency capped by the VCOMP_THREADS
/// environment variable and an optional per-call limit.
inline int thread_cap(int limit = 0) {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
    if (const char* env = std::getenv("VCOMP_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) n = std::min(n, v);
    }
    if (limit > 0) n = std::min(n, limit);
    return std::max(n, 1);
}

/// Runs fn(i) for i in [0, count) on up to thread_cap(limit) threads.
/// Each index is processed exactly once; result placement is the caller's
/// responsibility (index into pre-sized storage to stay deterministic).
/// The first exception thrown by any job is rethrown on the calling thread.
inline void parallel_for_index(std::size_t count, const std::function<void(std::size_t)>& fn,
                               int limit = 0) {
    const int workers = std::min<std::size_t>(thread_cap(limit), std::max<std::size_t>(count, 1));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (int t = 0; t < workers; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace vcomp
