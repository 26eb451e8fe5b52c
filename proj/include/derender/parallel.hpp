#pragma once

// Static block-partitioned parallel loop.  Work item i is processed exactly
// once and writes only its own outputs, so results cannot depend on the
// thread count; with threads <= 1 the loop runs inline.

#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace derender {

inline void parallel_for(long n, int threads, const std::function<void(long)>& fn) {
    if (n <= 0) return;
    if (threads <= 1 || n == 1) {
        for (long i = 0; i < n; ++i) fn(i);
        return;
    }
    int workers = static_cast<int>(std::min<long>(threads, n));
    std::vector<std::thread> pool;
    std::mutex err_mutex;
    std::exception_ptr first_error;
    for (int w = 0; w < workers; ++w) {
        long lo = n * w / workers;
        long hi = n * (w + 1) / workers;
        pool.emplace_back([&, lo, hi] {
            try {
                for (long i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace derender
