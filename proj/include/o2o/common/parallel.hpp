#pragma once

#include <cstddef>
#include <functional>

namespace o2o {

// Caps the worker count of every parallel section (0 = hardware concurrency).
void set_thread_limit(unsigned limit);
unsigned thread_limit();

// Runs body(i) for i in [0, n). Iterations must only write to their own
// output slot; callers gather results in index order, so the outcome does not
// depend on scheduling. The first exception thrown by any iteration is
// rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace o2o
