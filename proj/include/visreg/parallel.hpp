#pragma once

#include <cstddef>
#include <functional>

namespace visreg {

/// Worker count: hardware concurrency, capped by the VISREG_THREADS
/// environment variable when it is set to a positive integer.
std::size_t worker_count();

/// Runs body(i) for i in [0, n) across worker threads. Each index is
/// visited exactly once; bodies must only write state owned by their index.
/// The first exception thrown by any body is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace visreg
