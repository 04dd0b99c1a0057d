#pragma once

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace udnet {

/// Worker cap: UDNET_THREADS if set, else 1 (deterministic default).
inline int worker_count() {
  if (const char* env = std::getenv("UDNET_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return std::min<int>(n, static_cast<int>(std::thread::hardware_concurrency()));
  }
  return 1;
}

/// Index-chunked parallel loop; fn(i) must be independent across i.
template <class Fn>
void parallel_for(int n, Fn&& fn) {
  const int workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  for (int t = 0; t < workers; ++t)
    threads.emplace_back([&, t] {
      for (int i = t; i < n; i += workers) fn(i);
    });
  for (auto& th : threads) th.join();
}

}  // namespace udnet
