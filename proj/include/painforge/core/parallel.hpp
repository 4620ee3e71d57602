#pragma once

#include <cstddef>
#include <functional>

namespace painforge {

/// Worker count: PAINFORGE_THREADS when set and positive, otherwise hardware
/// concurrency (at least 1).
std::size_t worker_count();

/// Runs body(i) for i in [0, n) on up to `workers` threads. Indices are handed
/// out dynamically, so body must not depend on execution order. The first
/// exception thrown by any body is rethrown after all workers join.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& body);

}  // namespace painforge
