#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace evmo::detail {

/// Worker count resolution: explicit request wins, otherwise the
/// EVIDENT_MOTION_THREADS environment variable, otherwise hardware
/// concurrency. Zero means "auto" at every level.
inline unsigned resolve_thread_count(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("EVIDENT_MOTION_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

/// Runs fn(i) for i in [0, n). Work items must write to disjoint state.
/// Chunked dynamic scheduling; callers rely on per-item determinism, not
/// on any particular assignment of items to threads.
inline void parallel_for(std::size_t n, unsigned threads,
                         const std::function<void(std::size_t)>& fn) {
  unsigned workers = resolve_thread_count(threads);
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  if (workers > n) workers = static_cast<unsigned>(n);
  std::size_t chunk = n / (static_cast<std::size_t>(workers) * 8);
  if (chunk == 0) chunk = 1;
  std::atomic<std::size_t> cursor{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        std::size_t begin = cursor.fetch_add(chunk);
        if (begin >= n) return;
        std::size_t end = begin + chunk < n ? begin + chunk : n;
        for (std::size_t i = begin; i < end; ++i) fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace evmo::detail
