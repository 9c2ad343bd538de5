#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace mobiseg {

/// Bad or unusable input data (exit code 1 at the CLI).
class InputError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// An internal invariant was violated (exit code 2 at the CLI).
class InvariantError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

void warn(std::string_view message);
void set_quiet(bool quiet);
bool quiet();

/// Number of worker threads used by the data-parallel loops. Results never
/// depend on this value.
void set_workers(unsigned n);
unsigned workers();

/// Runs fn(i) for i in [0, n). Each index is processed exactly once; callers
/// write results into per-index slots so the output is independent of the
/// worker count and of scheduling.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn)
{
    const unsigned w = workers();
    if (w <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const std::size_t chunk = n / (w * 8) + 1;
    auto body = [&] {
        for (;;) {
            const std::size_t begin = next.fetch_add(chunk);
            if (begin >= n)
                return;
            const std::size_t end = std::min(n, begin + chunk);
            try {
                for (std::size_t i = begin; i < end; ++i)
                    fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure)
                    failure = std::current_exception();
                next.store(n);
                return;
            }
        }
    };
    std::vector<std::thread> threads;
    const unsigned spawn = static_cast<unsigned>(std::min<std::size_t>(w, n));
    threads.reserve(spawn - 1);
    for (unsigned t = 1; t < spawn; ++t)
        threads.emplace_back(body);
    body();
    for (auto& t : threads)
        t.join();
    if (failure)
        std::rethrow_exception(failure);
}

} // namespace mobiseg
