#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace sigmor {

/// Run fn(begin, end) over fixed-size chunks of [0, total). The chunking is
/// independent of the thread count, so any function that writes results keyed
/// by index produces identical output for 1 or N threads. fn must only touch
/// its own range.
inline void parallel_chunks(std::int64_t total, std::int64_t chunk, int threads,
                            const std::function<void(std::int64_t, std::int64_t)>& fn) {
    if (total <= 0) return;
    if (chunk < 1) chunk = 1;
    const std::int64_t n_chunks = (total + chunk - 1) / chunk;
    if (threads < 1) threads = 1;
    if (threads == 1 || n_chunks == 1) {
        for (std::int64_t c = 0; c < n_chunks; ++c)
            fn(c * chunk, std::min(total, (c + 1) * chunk));
        return;
    }
    std::atomic<std::int64_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            std::int64_t c = next.fetch_add(1);
            if (c >= n_chunks) return;
            try {
                fn(c * chunk, std::min(total, (c + 1) * chunk));
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const int n_workers = static_cast<int>(std::min<std::int64_t>(threads, n_chunks));
    pool.reserve(n_workers);
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

} // namespace sigmor
