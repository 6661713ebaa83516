#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace stochcool {

// Index-parallel loop over [0, count); results must be written to disjoint
// slots so output order never depends on scheduling.  threads <= 0 uses the
// hardware concurrency.
inline void parallel_for_index(std::size_t count, int threads,
                               const std::function<void(std::size_t)>& fn) {
  unsigned int hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  const unsigned int width =
      std::min<unsigned int>(threads > 0 ? static_cast<unsigned int>(threads) : hw,
                             static_cast<unsigned int>(count == 0 ? 1 : count));
  if (width <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(width);
  for (unsigned int t = 0; t < width; ++t) {
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (std::thread& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace stochcool
