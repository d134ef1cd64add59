#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace cimm {

namespace detail {
inline std::atomic<int>& thread_count_slot() {
  static std::atomic<int> slot{[] {
    if (const char* env = std::getenv("CIMM_THREADS")) {
      try {
        int n = std::stoi(env);
        if (n >= 1) return n;
      } catch (...) {
      }
    }
    return 1;
  }()};
  return slot;
}
}  // namespace detail

/// Worker count used by the convolution kernels. Read once from the
/// CIMM_THREADS environment variable (default 1).
inline int thread_count() { return detail::thread_count_slot().load(); }

inline void set_thread_count(int n) { detail::thread_count_slot().store(std::max(1, n)); }

/// Runs fn(i) for i in [begin, end), split into contiguous chunks. Callers
/// must only write disjoint outputs per index, which makes results
/// independent of the thread count.
template <typename Fn>
void parallel_for(std::size_t begin, std::size_t end, Fn&& fn) {
  const std::size_t count = end > begin ? end - begin : 0;
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(thread_count()), count);
  if (workers <= 1) {
    for (std::size_t i = begin; i < end; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  const std::size_t chunk = (count + workers - 1) / workers;
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t lo = begin + w * chunk;
    const std::size_t hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (std::size_t i = begin; i < std::min(end, begin + chunk); ++i) fn(i);
}

}  // namespace cimm
