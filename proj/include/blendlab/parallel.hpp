// Copyright (C) 2026 blendlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace blendlab {

/// Worker count: `requested` (0 = hardware concurrency), capped by the
/// BLENDLAB_THREADS environment variable and by the amount of work.
inline std::size_t resolve_thread_count(std::size_t requested, std::size_t work_items)
{
    std::size_t n = requested;
    if (n == 0) {
        n = std::max(1u, std::thread::hardware_concurrency());
    }
    if (const char* env = std::getenv("BLENDLAB_THREADS")) {
        char* end = nullptr;
        const unsigned long cap = std::strtoul(env, &end, 10);
        if (end != env && cap > 0) {
            n = std::min<std::size_t>(n, cap);
        }
    }
    return std::max<std::size_t>(1, std::min(n, std::max<std::size_t>(1, work_items)));
}

/// Runs fn(i) for i in [0, count) over contiguous blocks, one per worker.
/// If any call throws, the exception from the lowest failing index is
/// rethrown after all workers finish, so the reported failure does not
/// depend on the thread count.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn)
{
    if (count == 0) {
        return;
    }
    threads = std::clamp<std::size_t>(threads, 1, count);
    struct Failure {
        std::size_t index = 0;
        std::exception_ptr error;
    };
    std::vector<Failure> failures(threads);

    auto work = [&](std::size_t worker) {
        const std::size_t begin = count * worker / threads;
        const std::size_t end = count * (worker + 1) / threads;
        for (std::size_t i = begin; i < end; ++i) {
            try {
                fn(i);
            } catch (...) {
                failures[worker] = Failure{i, std::current_exception()};
                return;
            }
        }
    };

    if (threads == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (std::size_t w = 0; w < threads; ++w) {
            pool.emplace_back(work, w);
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    for (const auto& f : failures) {
        if (f.error) {
            std::rethrow_exception(f.error);
        }
    }
}

} // namespace blendlab
