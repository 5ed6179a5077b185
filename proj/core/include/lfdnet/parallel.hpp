#pragma once

#include <cstddef>
#include <functional>

namespace lfdnet {

/// Resolves a --jobs value: 0 means the number of hardware threads.
int resolve_jobs(int jobs);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. If any call throws, the
/// exception of the lowest failing index is rethrown after all workers stop.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace lfdnet
