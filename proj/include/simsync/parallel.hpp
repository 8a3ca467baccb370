#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace simsync {

// Worker count: SIMSYNC_THREADS if set to a positive integer, else the
// hardware concurrency (at least 1).
inline int thread_budget() {
  if (const char* env = std::getenv("SIMSYNC_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs body(k) for k in [0, n). Every index is processed exactly once, even
// after a failure; the exception of the lowest failing index is rethrown once
// all work is done, so the outcome does not depend on the thread count.
inline void parallel_for(int n, const std::function<void(int)>& body, int threads = thread_budget()) {
  if (n <= 0) return;
  threads = std::clamp(threads, 1, n);
  std::exception_ptr error;
  int error_index = n;
  std::mutex error_mutex;
  auto run = [&](int k) {
    try {
      body(k);
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (k < error_index) {
        error_index = k;
        error = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    for (int k = 0; k < n; ++k) run(k);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (int k = next++; k < n; k = next++) run(k);
      });
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace simsync
