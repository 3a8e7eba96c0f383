#pragma once

#include <cstddef>
#include <functional>

namespace dacnet {

// Process-wide worker count used by the kernels. 1 runs everything inline.
void set_worker_count(std::size_t workers);
std::size_t worker_count();

// Runs body(i) for i in [0, n). Items are split into contiguous chunks, one
// per worker. Callers must make each item write only to memory it owns, so
// the result does not depend on how items are split.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace dacnet
