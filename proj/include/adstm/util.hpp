#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace adstm {

/// Worker cap: min(hardware_concurrency, ADSTM_THREADS) with a floor of 1.
inline int max_threads() {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw <= 0) hw = 1;
    if (const char* env = std::getenv("ADSTM_THREADS")) {
        const int cap = std::atoi(env);
        if (cap > 0) hw = std::min(hw, cap);
    }
    return hw;
}

/// Runs fn(i) for i in [0, count) across worker threads. Each index writes
/// only its own outputs, so results are identical for any thread count.
inline void parallel_for(int count, const std::function<void(int)>& fn) {
    const int threads = std::min(max_threads(), count);
    if (threads <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t]() {
            for (int i = t; i < count; i += threads) fn(i);
        });
    }
    for (std::thread& th : pool) th.join();
}

}  // namespace adstm
