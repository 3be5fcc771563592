#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace vlsa {

// Calls fn(i) for i in [0, n) over contiguous chunks, one per thread. The
// first exception (by chunk order) is rethrown after all threads join.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const std::size_t t = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
  if (t <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(t);
  {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n + t - 1) / t;
    for (std::size_t c = 0; c < t; ++c) {
      pool.emplace_back([&, c] {
        try {
          for (std::size_t i = c * chunk; i < std::min(n, (c + 1) * chunk); ++i) fn(i);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace vlsa
