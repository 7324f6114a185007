#pragma once

#include <cstddef>
#include <functional>

namespace moco {

/// Process-wide worker budget used by parallel_for. Defaults to 1.
void set_max_threads(int n);
int max_threads();

/// Run fn(begin, end) over a partition of [0, n). The partition depends only
/// on n (not on the thread budget) and workers own disjoint chunks, so any
/// code whose chunks write disjoint outputs produces identical results for
/// every thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace moco
