#pragma once

#include <functional>

namespace dpca {

// Worker count: DPCA_THREADS when set, otherwise hardware concurrency.
int default_thread_count();

// Runs fn(0..count-1) on a fixed pool. Exceptions from tasks are rethrown
// (first one wins) after all workers drain.
void parallel_for(int count, const std::function<void(int)>& fn, int threads = 0);

}  // namespace dpca
