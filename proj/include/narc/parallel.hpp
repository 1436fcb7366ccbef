#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace narc {

inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const auto hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs body(i, worker) for i in [0, n) over contiguous chunks. Callers write
/// results by index, so output does not depend on the worker count. The first
/// exception (lowest chunk) is rethrown after all workers join.
template <class Body>
void parallel_for(std::size_t n, int threads, Body&& body) {
    const auto workers = static_cast<std::size_t>(std::max(1, std::min<int>(resolve_threads(threads), static_cast<int>(std::max<std::size_t>(n, 1)))));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i, 0);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            const std::size_t begin = w * chunk;
            const std::size_t end = std::min(n, begin + chunk);
            try {
                for (std::size_t i = begin; i < end; ++i) body(i, static_cast<int>(w));
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace narc
