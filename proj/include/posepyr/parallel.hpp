#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace posepyr {

/// Worker count for internal parallel loops; read once from POSEPYR_THREADS (default 1).
inline int thread_cap() {
  static const int cap = [] {
    const char* env = std::getenv("POSEPYR_THREADS");
    if (!env) return 1;
    try {
      return std::max(1, std::stoi(env));
    } catch (...) {
      return 1;
    }
  }();
  return cap;
}

/// Runs fn(i) for i in [0, n). Each index must write disjoint outputs so the
/// result does not depend on the worker count.
template <typename Fn>
void parallel_for(long n, Fn&& fn) {
  const int workers = static_cast<int>(std::min<long>(thread_cap(), n));
  if (workers <= 1) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (long i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace posepyr
