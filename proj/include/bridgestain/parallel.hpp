#pragma once

#include <cstddef>
#include <functional>

namespace bridgestain {

/// Worker count: BRIDGESTAIN_THREADS when set to a positive integer,
/// otherwise the hardware concurrency.
int worker_count();

/// Runs fn(0..n-1) on up to worker_count() threads. Each index is handled
/// exactly once; the first exception thrown is rethrown after all workers
/// stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace bridgestain
