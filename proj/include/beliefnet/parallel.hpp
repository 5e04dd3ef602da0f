#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace beliefnet {

/// Worker count from BELIEFNET_THREADS, falling back to `fallback`.
inline std::size_t threads_from_env(std::size_t fallback = 1) {
  if (const char* env = std::getenv("BELIEFNET_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<std::size_t>(v);
  }
  return fallback;
}

/// Runs fn(0..count-1) on up to `threads` workers with a fixed strided
/// assignment; fn must only write to its own output slot.
inline void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (std::size_t w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += threads) fn(i);
    });
}

}  // namespace beliefnet
