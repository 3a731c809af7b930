#include "mvlstm/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace mvlstm {

std::size_t worker_cap() {
    std::size_t cap = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("MVLSTM_MAX_WORKERS")) {
        const long parsed = std::strtol(env, nullptr, 10);
        if (parsed >= 1) cap = static_cast<std::size_t>(parsed);
    }
    return cap;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min(worker_cap(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers) fn(i);
        });
    }
    for (std::thread& t : pool) t.join();
}

}  // namespace mvlstm
