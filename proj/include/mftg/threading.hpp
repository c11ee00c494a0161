#pragma once

#include <functional>

namespace mftg {

// Worker cap for data-parallel loops. Defaults to the hardware count; the
// CLI lowers it via --threads or the ROBUST_MFTG_THREADS environment
// variable. Results never depend on the setting: parallel_for only
// partitions index ranges, and callers reduce per-index outputs in index
// order.
int thread_count();
void set_thread_count(int n);

void parallel_for(int n, const std::function<void(int)>& body);

}  // namespace mftg
