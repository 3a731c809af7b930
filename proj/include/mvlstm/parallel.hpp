#pragma once

#include <cstddef>
#include <functional>

namespace mvlstm {

// Worker cap from MVLSTM_MAX_WORKERS (default: hardware concurrency).
std::size_t worker_cap();

// Runs fn(0..n-1) across up to worker_cap() threads. Callers must write only
// to per-index slots; results are then independent of the worker count, so
// parallel and serial execution stay bit-identical.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace mvlstm
