#include "mtmask/alloc_stats.hpp"

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <new>
#include <string>

namespace mtmask::alloc_stats {
namespace {

std::atomic<std::size_t> g_current{0};
std::atomic<std::size_t> g_peak{0};

// Keeps the user pointer aligned for any fundamental type.
constexpr std::size_t kHeader = alignof(std::max_align_t);

void* counted_alloc(std::size_t n) noexcept {
  auto* base = static_cast<unsigned char*>(std::malloc(n + kHeader));
  if (!base) return nullptr;
  *reinterpret_cast<std::size_t*>(base) = n;
  const std::size_t now = g_current.fetch_add(n, std::memory_order_relaxed) + n;
  std::size_t peak = g_peak.load(std::memory_order_relaxed);
  while (now > peak && !g_peak.compare_exchange_weak(peak, now, std::memory_order_relaxed)) {
  }
  return base + kHeader;
}

void counted_free(void* p) noexcept {
  if (!p) return;
  auto* base = static_cast<unsigned char*>(p) - kHeader;
  g_current.fetch_sub(*reinterpret_cast<std::size_t*>(base), std::memory_order_relaxed);
  std::free(base);
}

}  // namespace

std::size_t current_bytes() noexcept { return g_current.load(std::memory_order_relaxed); }
std::size_t peak_bytes() noexcept { return g_peak.load(std::memory_order_relaxed); }
void reset_peak() noexcept { g_peak.store(g_current.load(std::memory_order_relaxed), std::memory_order_relaxed); }

std::size_t peak_rss_bytes() {
  std::ifstream in("/proc/self/status");
  for (std::string line; std::getline(in, line);)
    if (line.rfind("VmHWM:", 0) == 0) return std::stoull(line.substr(6)) * 1024;
  return 0;
}

}  // namespace mtmask::alloc_stats

// Global replacements. Over-aligned allocations keep the library defaults and
// are not counted.
void* operator new(std::size_t n) {
  if (void* p = mtmask::alloc_stats::counted_alloc(n)) return p;
  throw std::bad_alloc();
}
void* operator new[](std::size_t n) {
  if (void* p = mtmask::alloc_stats::counted_alloc(n)) return p;
  throw std::bad_alloc();
}
void* operator new(std::size_t n, const std::nothrow_t&) noexcept { return mtmask::alloc_stats::counted_alloc(n); }
void* operator new[](std::size_t n, const std::nothrow_t&) noexcept { return mtmask::alloc_stats::counted_alloc(n); }
void operator delete(void* p) noexcept { mtmask::alloc_stats::counted_free(p); }
void operator delete[](void* p) noexcept { mtmask::alloc_stats::counted_free(p); }
void operator delete(void* p, std::size_t) noexcept { mtmask::alloc_stats::counted_free(p); }
void operator delete[](void* p, std::size_t) noexcept { mtmask::alloc_stats::counted_free(p); }
void operator delete(void* p, const std::nothrow_t&) noexcept { mtmask::alloc_stats::counted_free(p); }
void operator delete[](void* p, const std::nothrow_t&) noexcept { mtmask::alloc_stats::counted_free(p); }
