#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace vitprobe::detail {

/// Runs fn(i) for i in [0, n) on up to `threads` workers with a static
/// round-robin assignment. Each index writes only its own slot, so results
/// do not depend on scheduling. The first exception (by worker) is rethrown.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t wk = 0; wk < workers; ++wk) {
    pool.emplace_back([&, wk] {
      try {
        for (std::size_t i = wk; i < n; i += workers) fn(i);
      } catch (...) {
        errors[wk] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace vitprobe::detail
