#include "mobiseg/common.hpp"

#include <algorithm>
#include <iostream>

namespace mobiseg {

namespace {
std::atomic<bool> g_quiet{false};
std::atomic<unsigned> g_workers{1};
std::mutex g_log_mutex;
} // namespace

void warn(std::string_view message)
{
    if (g_quiet.load())
        return;
    std::lock_guard lock(g_log_mutex);
    std::cerr << "warning: " << message << '\n';
}

void set_quiet(bool q) { g_quiet.store(q); }
bool quiet() { return g_quiet.load(); }

void set_workers(unsigned n) { g_workers.store(std::max(1u, n)); }
unsigned workers() { return g_workers.load(); }

} // namespace mobiseg
