#pragma once

#include <cstddef>
#include <functional>

namespace tcb {

// Process-wide worker cap. 0 means "use TCB_LAB_THREADS, else hardware".
void set_thread_count(std::size_t n);
std::size_t thread_count();

// Runs body(i) for i in [0, n). Each index is handled exactly once; callers
// write into per-index slots and reduce afterwards in index order, which
// keeps results independent of the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace tcb
