#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace mixar {

/// Worker count from MIXAR_THREADS (0 or unset = hardware concurrency).
inline unsigned worker_count()
{
    unsigned n = 0;
    if (const char* env = std::getenv("MIXAR_THREADS")) {
        try {
            n = static_cast<unsigned>(std::stoul(env));
        } catch (const std::exception&) {
            n = 0;
        }
    }
    if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
    return n;
}

namespace detail {
inline thread_local bool inside_parallel_region = false;
} // namespace detail

/// Runs body(i) for i in [0, count). Each index is handled exactly once and
/// callers write results by index, so output never depends on scheduling.
/// The first exception thrown (lowest index) is rethrown after all workers join.
/// Nested calls from inside a worker run serially.
template <class Body>
void parallel_for(std::size_t count, Body&& body, unsigned threads = worker_count())
{
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
    if (threads <= 1 || detail::inside_parallel_region) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::mutex guard;
    std::size_t failed_at = count;
    std::exception_ptr failure;

    auto worker = [&] {
        detail::inside_parallel_region = true;
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(guard);
                if (i < failed_at) {
                    failed_at = i;
                    failure = std::current_exception();
                }
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

} // namespace mixar
