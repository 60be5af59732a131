#ifndef HESPLIT_UTIL_PARALLEL_HPP
#define HESPLIT_UTIL_PARALLEL_HPP

#include <algorithm>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace hesplit {

// Process-wide cap on worker threads, settable from the CLI (--threads).
int max_worker_threads();
void set_max_worker_threads(int n);

// Runs fn(i) for i in [0, count). Spawns at most max_worker_threads()
// workers over contiguous chunks; falls back to inline execution for small
// ranges. fn must be safe to call concurrently for distinct i.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace hesplit

#endif
