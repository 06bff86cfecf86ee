#pragma once

#include <cstddef>
#include <functional>

namespace nccr {

// Runs fn(i) for every i in [0, n) across up to `threads` workers
// (0 = hardware concurrency). Callers must make fn(i) independent of
// execution order; the first exception thrown is rethrown after all
// workers stop.
void parallel_for(size_t n, const std::function<void(size_t)>& fn, int threads = 0);

}  // namespace nccr
