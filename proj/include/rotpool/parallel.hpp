#pragma once

#include <cstddef>
#include <functional>

namespace rotpool {

/// Worker count for parallel sections: ROTPOOL_THREADS when set to a positive
/// integer, otherwise every available core.
int worker_count();

/// Calls body(i) for i in [0, n) on the worker pool. Bodies must write only
/// to their own slot of a preallocated result so the merge order is fixed.
/// The first exception thrown by a body is rethrown after all tasks finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace rotpool
