#pragma once

#include <cstddef>
#include <functional>

namespace aet {

/// Worker count: AET_THREADS if set (clamped to [1, 256]), else
/// hardware concurrency. Read per call so tests can vary it.
int thread_count();

/// Runs fn(begin, end) over a partition of [0, n) across workers.
/// Chunk boundaries depend only on n and the worker count, and callers
/// are expected to write to disjoint, index-addressed outputs, so results
/// never depend on scheduling order.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

} // namespace aet
