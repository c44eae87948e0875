#pragma once

#include <functional>

namespace esiw {

// Resolves a thread-count request: n > 0 is taken as-is, n <= 0 falls back to
// the ESIW_THREADS environment variable, then to the hardware concurrency.
int resolve_thread_count(int requested);

// Runs body(i) for i in [0, n) on up to `threads` threads. Each index is
// handled exactly once; callers must make body(i) write only to slot i so the
// result is independent of the thread count.
void parallel_for(int n, int threads, const std::function<void(int)>& body);

}  // namespace esiw
