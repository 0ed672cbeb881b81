#pragma once

#include <cstddef>
#include <functional>

namespace habitopt {

/// Worker count: hardware concurrency capped by HABITOPT_THREADS (if set and positive).
unsigned worker_count();

/// Runs body(i) for i in [0, n) across worker threads. Exceptions escape from the lowest failing index.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace habitopt
