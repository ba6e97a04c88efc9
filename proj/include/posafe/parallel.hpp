#pragma once

#include <cstddef>
#include <functional>

namespace posafe {

/// Worker count used by parallel_for; 1 forces single-threaded execution.
/// Defaults to the hardware concurrency.
void set_thread_count(std::size_t n);
std::size_t thread_count();

/// Calls fn(i) for i in [0, n). Work is split statically, so any reduction
/// the caller performs afterwards in index order is independent of the
/// thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace posafe
