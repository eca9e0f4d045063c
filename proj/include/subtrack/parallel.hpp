#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace subtrack {

/// Runs body(begin, end) over [0, n) split into contiguous chunks, one per worker.
/// The first exception thrown by any worker is rethrown on the calling thread.
template <typename Body>
void parallel_for(std::size_t n, int workers, Body&& body)
{
    const std::size_t w = std::clamp<std::size_t>(workers > 0 ? static_cast<std::size_t>(workers) : 1, 1,
                                                   std::max<std::size_t>(n, 1));
    if (w == 1) {
        body(std::size_t{0}, n);
        return;
    }
    std::vector<std::exception_ptr> errors(w);
    {
        std::vector<std::jthread> pool;
        pool.reserve(w);
        const std::size_t chunk = (n + w - 1) / w;
        for (std::size_t k = 0; k < w; ++k) {
            const std::size_t begin = std::min(n, k * chunk);
            const std::size_t end = std::min(n, begin + chunk);
            pool.emplace_back([&, k, begin, end] {
                try {
                    body(begin, end);
                } catch (...) {
                    errors[k] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

} // namespace subtrack
