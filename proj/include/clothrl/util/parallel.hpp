#pragma once

#include <cstddef>
#include <functional>

namespace clothrl {

// Worker cap: min(hardware_concurrency, CLOTHRL_THREADS if set). At least 1.
int worker_count();

// Runs fn(i) for i in [0, n). Work is split into contiguous index ranges, one
// per worker; fn must only write to per-index slots so results are identical
// for any worker count. Exceptions from workers are rethrown on the caller.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace clothrl
