#pragma once

#include <cstddef>
#include <functional>

namespace spectree {

/// Worker count: DYSPEC_THREADS when set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
std::size_t worker_count();

/// Calls fn(i) for every i in [0, n) across worker_count() threads. Callers
/// write results into slot i, so the outcome does not depend on scheduling.
/// The first exception thrown by any call is rethrown after all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace spectree
