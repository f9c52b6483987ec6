#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace starcomplete {

/// Runs fn(0..n-1) on up to `width` threads. Jobs are claimed from a shared
/// counter; each job must write only its own outputs. The first exception
/// thrown by any job is rethrown after all threads join.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t width, Fn&& fn) {
    if (width <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        const std::size_t count = std::min(width, n);
        pool.reserve(count);
        for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
    }
    if (error) std::rethrow_exception(error);
}

inline std::size_t hardware_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

} // namespace starcomplete
