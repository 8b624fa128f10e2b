#pragma once

#include <cstddef>
#include <functional>

namespace csal {

/// Caps the number of worker threads used by parallel_for. Values < 1 reset to 1.
void set_num_threads(int n);
int num_threads();

/// Runs body(i) for every i in [0, n), splitting contiguous index ranges across
/// at most num_threads() workers. Each index runs exactly once; callers write
/// results to per-index slots and reduce afterwards in index order, so results
/// do not depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace csal
