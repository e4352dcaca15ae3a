#pragma once

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace advlab {

// Runs fn(i) for i in [0, n) across worker threads. Work is handed out in
// fixed-size chunks through an atomic counter; each index writes only its own
// output slot, so results are independent of the thread schedule.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                         std::size_t chunk = 8) {
    unsigned workers = std::thread::hardware_concurrency();
    if (workers <= 1 || n <= chunk) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr err;
    std::atomic<bool> failed{false};
    auto worker = [&] {
        for (;;) {
            std::size_t lo = next.fetch_add(chunk);
            if (lo >= n || failed.load()) return;
            std::size_t hi = std::min(n, lo + chunk);
            for (std::size_t i = lo; i < hi; ++i) {
                try {
                    fn(i);
                } catch (...) {
                    if (!failed.exchange(true)) err = std::current_exception();
                    return;
                }
            }
        }
    };
    unsigned count = std::min<std::size_t>(workers, (n + chunk - 1) / chunk);
    pool.reserve(count);
    for (unsigned t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failed.load() && err) std::rethrow_exception(err);
}

} // namespace advlab
