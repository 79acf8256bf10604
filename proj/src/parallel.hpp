#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace parenting {

/// Process-wide worker cap; 0 means hardware concurrency.
inline std::size_t& worker_limit() {
  static std::size_t limit = 0;
  return limit;
}

inline std::size_t resolve_workers(std::size_t requested) {
  std::size_t n = requested ? requested : worker_limit();
  if (!n) n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  return n;
}

/// Runs fn(i) for i in [0, n). Each index is visited exactly once; callers
/// write results into index-addressed slots and reduce them in order so the
/// outcome does not depend on the worker count.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t workers = 0) {
  workers = std::min(resolve_workers(workers), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace parenting
