#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace aaseg {

/// Worker count for per-frame parallel loops; AASEG_THREADS overrides,
/// default 1. Work is split by index so results land in caller-owned slots
/// and outputs cannot depend on the thread count.
inline unsigned thread_count() {
    if (const char* env = std::getenv("AASEG_THREADS")) {
        const long n = std::strtol(env, nullptr, 10);
        if (n >= 1) return static_cast<unsigned>(n);
    }
    return 1;
}

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const unsigned workers = std::min<std::size_t>(thread_count(), n == 0 ? 1 : n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < workers; ++t)
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < n; i += workers) fn(i);
        });
    for (auto& th : pool) th.join();
}

} // namespace aaseg
