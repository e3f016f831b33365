// parallel.hpp — fixed-size worker pool with static index partitioning

#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace qbm {

// Runs body(i) for i in [0, n) on `threads` workers. Each index is visited
// exactly once; callers write to per-index slots so results never depend on
// the number of workers. The first exception thrown by any worker is
// rethrown on the calling thread.
class Executor {
public:
    explicit Executor(std::size_t threads = 1) : threads_(threads == 0 ? 1 : threads) {}

    std::size_t threads() const noexcept { return threads_; }

    template <class Body>
    void parallel_for(std::size_t n, Body&& body) const {
        if (n == 0) return;
        const std::size_t workers = threads_ < n ? threads_ : n;
        if (workers == 1) {
            for (std::size_t i = 0; i < n; ++i) body(i);
            return;
        }
        std::exception_ptr first_error;
        std::mutex error_mutex;
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    // Interleaved assignment balances triangular workloads.
                    for (std::size_t i = w; i < n; i += workers) body(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        if (first_error) std::rethrow_exception(first_error);
    }

private:
    std::size_t threads_;
};

}  // namespace qbm
