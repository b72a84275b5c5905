#pragma once

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace couplab {

// Worker count: COUPLAB_WORKERS if set, else hardware concurrency.
inline int worker_count() {
  if (const char* env = std::getenv("COUPLAB_WORKERS")) {
    int w = std::atoi(env);
    if (w >= 1) return w;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// Runs fn(i) for i in [0,n). Each item must write only to its own slot of any
// shared output, keeping results independent of the schedule.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  if (n == 0) return;
  if (workers <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto body = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) break;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  int spawn = static_cast<int>(std::min<std::size_t>(n, workers));
  pool.reserve(spawn - 1);
  for (int t = 1; t < spawn; ++t) pool.emplace_back(body);
  body();
  for (auto& th : pool) th.join();
}

}  // namespace couplab
