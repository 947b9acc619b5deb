#pragma once

#include <cstddef>
#include <functional>

namespace udf {

/// Process-wide worker cap used by every parallel loop. Values below 1 are
/// clamped to 1. Defaults to the hardware concurrency.
void set_max_threads(int threads);
int max_threads();

/// Runs fn(begin, end) over [0, n) in fixed-size blocks. The block layout
/// depends only on n and `block`, never on the thread count, so any
/// computation that writes disjoint outputs per block is reproducible.
/// The first exception thrown by a block is rethrown on the caller.
void parallel_for(std::size_t n, std::size_t block,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace udf
