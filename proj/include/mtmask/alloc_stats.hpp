#pragma once

#include <cstddef>

namespace mtmask::alloc_stats {

/// Heap bytes currently held through the global operator new. The counters
/// are process-wide and only see allocations made after program start.
std::size_t current_bytes() noexcept;
std::size_t peak_bytes() noexcept;
/// Restarts peak tracking from the current level.
void reset_peak() noexcept;

/// Peak resident set size of the process from /proc/self/status (VmHWM), or
/// 0 when unavailable.
std::size_t peak_rss_bytes();

}  // namespace mtmask::alloc_stats
