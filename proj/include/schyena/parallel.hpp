#pragma once

#include <functional>

#include "schyena/tensor.hpp"

namespace schyena {

// Worker cap: SCHYENA_THREADS when set and positive, else the hardware
// concurrency (at least 1).
int worker_count();

// Runs fn(i) for i in [0, n) on up to `threads` workers. Rethrows the first
// exception raised by any call after all workers finish.
void parallel_for(Index n, const std::function<void(Index)>& fn, int threads = worker_count());

}  // namespace schyena
