#pragma once

#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace atk {

// Runs fn(i) for i in [0, n). With more than one worker the index range is
// split into fixed-size chunks assigned round-robin, so every index is still
// processed by exactly one worker and each fn(i) must only write state owned
// by index i. Results are then identical for any worker count.
inline void parallel_for(int64_t n, int workers, const std::function<void(int64_t)>& fn) {
  if (n <= 0) return;
  if (workers <= 1 || n == 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  int nw = workers;
  if (static_cast<int64_t>(nw) > n) nw = static_cast<int>(n);
  std::vector<std::thread> threads;
  threads.reserve(nw);
  for (int w = 0; w < nw; ++w) {
    threads.emplace_back([&, w]() {
      for (int64_t i = w; i < n; i += nw) fn(i);
    });
  }
  for (auto& t : threads) t.join();
}

}  // namespace atk
