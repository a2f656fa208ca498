#pragma once

#include "hscnn/common.hpp"

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace hscnn {

/// Runs fn(i) for i in [0, n) on up to `threads` workers with a static
/// contiguous partition. Callers keep per-index outputs and reduce them in
/// index order, so results do not depend on the thread count.
template <typename Fn>
void parallel_for(Index n, int threads, Fn&& fn)
{
    const Index workers = std::min<Index>(std::max(threads, 1), n);
    if (workers <= 1) {
        for (Index i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    const Index chunk = (n + workers - 1) / workers;
    for (Index w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                const Index end = std::min(n, (w + 1) * chunk);
                for (Index i = w * chunk; i < end; ++i)
                    fn(i);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool)
        t.join();
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

} // namespace hscnn
