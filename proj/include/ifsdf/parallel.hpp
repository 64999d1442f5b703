#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace ifsdf {

inline int default_threads() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// Static range split: worker t gets one contiguous chunk [begin_t, end_t).
// With a fixed thread count the work assignment, and therefore any per-worker
// accumulation order, is identical between runs.
inline void parallel_for(std::size_t n, int threads,
                         const std::function<void(std::size_t, std::size_t, int)>& fn) {
  if (n == 0) return;
  const int t = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  if (t == 1) {
    fn(0, n, 0);
    return;
  }
  const std::size_t chunk = (n + t - 1) / t;
  std::vector<std::thread> workers;
  workers.reserve(t - 1);
  for (int w = 1; w < t; ++w) {
    const std::size_t b = std::min(n, w * chunk);
    const std::size_t e = std::min(n, (w + 1) * chunk);
    if (b < e) workers.emplace_back([&fn, b, e, w] { fn(b, e, w); });
  }
  fn(0, std::min(n, chunk), 0);
  for (auto& th : workers) th.join();
}

}  // namespace ifsdf
