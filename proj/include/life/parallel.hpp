#pragma once

#include <cstddef>
#include <functional>

namespace life {

/// Global cap on worker threads used by slice-parallel stages. Default 1.
void set_jobs(int jobs);
int jobs();

/// Runs body(i) for i in [0, n). Iterations must write disjoint outputs, so
/// results do not depend on the worker count. Rethrows the first exception.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace life
