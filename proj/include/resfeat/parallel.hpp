#pragma once

#include <cstddef>
#include <functional>

namespace resfeat {

/// Runs fn(0) .. fn(n - 1) on up to `threads` workers (the caller counts as
/// one). Callers write results into per-index slots, so output order never
/// depends on scheduling. The exception of the lowest failing index is
/// rethrown after all workers finish.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace resfeat
