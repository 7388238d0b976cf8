#pragma once

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace piwf {

// Worker cap: min(hardware threads, PIWF_THREADS if set). Resolved once.
inline std::size_t worker_count() {
    static const std::size_t n = [] {
        std::size_t hw = std::thread::hardware_concurrency();
        if (hw == 0) hw = 1;
        if (const char* env = std::getenv("PIWF_THREADS")) {
            const long cap = std::atol(env);
            if (cap >= 1) hw = std::min<std::size_t>(hw, static_cast<std::size_t>(cap));
        }
        return hw;
    }();
    return n;
}

// Static block partition of [0, n) over the worker set; f(begin, end, worker).
// Partitioning depends only on n and worker_count(), so results that reduce
// per-worker buffers in worker order are reproducible for a fixed thread cap.
template <typename F>
void parallel_for(std::size_t n, F&& f) {
    const std::size_t workers = std::min(worker_count(), std::max<std::size_t>(n, 1));
    if (workers <= 1 || n <= 1) {
        f(std::size_t{0}, n, std::size_t{0});
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 1; w < workers; ++w) {
        const std::size_t b = std::min(n, w * chunk);
        const std::size_t e = std::min(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&f, b, e, w] { f(b, e, w); });
    }
    f(std::size_t{0}, std::min(n, chunk), std::size_t{0});
    for (auto& t : pool) t.join();
}

}  // namespace piwf
