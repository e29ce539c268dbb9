#pragma once

#include <cstddef>
#include <functional>

namespace cyclesense {

/// Runs fn(i) for i in [0, n) on up to `threads` worker threads (0 means
/// hardware concurrency). The first exception thrown by any call is
/// rethrown after all workers have stopped.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace cyclesense
