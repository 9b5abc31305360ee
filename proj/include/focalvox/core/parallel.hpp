// Copyright Contributors to the focalvox Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace focalvox {

namespace detail {
inline std::atomic<std::size_t>& worker_override() {
  static std::atomic<std::size_t> value{0};
  return value;
}
}  // namespace detail

/// Upper bound on worker threads. FOCALVOX_THREADS caps it; set_max_workers
/// overrides it (0 restores the default). Results never depend on this value:
/// every parallel loop partitions independent output slots.
inline std::size_t max_workers() {
  std::size_t forced = detail::worker_override().load();
  if (forced > 0) return forced;
  std::size_t n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FOCALVOX_THREADS")) {
    try {
      long cap = std::stol(env);
      if (cap >= 1) n = std::min<std::size_t>(n, static_cast<std::size_t>(cap));
    } catch (...) {
    }
  }
  return n;
}

inline void set_max_workers(std::size_t n) { detail::worker_override().store(n); }

/// Calls fn(begin, end) over contiguous chunks of [0, n). Chunks never
/// overlap, so fn may write slot i without synchronisation.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t grain, Fn&& fn) {
  if (n == 0) return;
  std::size_t workers = std::min(max_workers(), (n + grain - 1) / std::max<std::size_t>(grain, 1));
  if (workers <= 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    std::size_t begin = w * chunk;
    std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace focalvox
