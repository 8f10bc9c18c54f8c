#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace sharelr {

// Runs fn(0..n-1) on one thread each and rethrows the first failure after
// all threads have joined. `on_error` runs once, at the first failure, so
// the caller can wake the threads still blocked on a peer.
inline void ParallelFor(std::size_t n, const std::function<void(std::size_t)>& fn,
                        const std::function<void()>& on_error = {}) {
  if (n == 1) {
    fn(0);
    return;
  }
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> threads;
  threads.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    threads.emplace_back([&, i] {
      try {
        fn(i);
      } catch (...) {
        bool notify = false;
        {
          std::lock_guard lock(mu);
          if (!first) {
            first = std::current_exception();
            notify = true;
          }
        }
        if (notify && on_error) on_error();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first) std::rethrow_exception(first);
}

}  // namespace sharelr
