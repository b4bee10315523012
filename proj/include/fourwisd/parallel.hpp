#pragma once

#include <algorithm>
#include <cstdlib>
#include <future>
#include <thread>
#include <vector>

namespace fourwisd {

// Worker cap for parallel sections; FOURWISD_THREADS overrides the hardware
// count. Always at least 1.
inline int thread_cap() {
  if (const char* env = std::getenv("FOURWISD_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, n) on up to thread_cap() workers. Joins in fixed
// order so results (and any exception) are deterministic.
template <typename Fn>
void parallel_for(int n, Fn&& fn) {
  const int workers = std::min(thread_cap(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::future<void>> futures;
  futures.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    futures.push_back(std::async(std::launch::async, [=, &fn] {
      for (int i = w; i < n; i += workers) fn(i);
    }));
  }
  for (auto& f : futures) f.get();
}

}  // namespace fourwisd
