#pragma once

#include <cstdlib>
#include <thread>
#include <vector>

namespace bnlab::detail {

// Worker count for intra-op parallelism, from BNLAB_THREADS (default 1).
inline int thread_count() {
  static const int n = [] {
    const char* env = std::getenv("BNLAB_THREADS");
    if (!env || !*env) return 1;
    const int v = std::atoi(env);
    return v < 1 ? 1 : v;
  }();
  return n;
}

// Static contiguous partition; fn(lo, hi) covers [0, count) exactly once.
// Workers own disjoint outputs and each item runs the same inner code as in
// a sequential loop, so results are bit-identical at any thread count.
template <typename Fn>
void parallel_ranges(long count, long min_grain, Fn&& fn) {
  const int nt = thread_count();
  if (nt <= 1 || count < 2 * min_grain) {
    if (count > 0) fn(0L, count);
    return;
  }
  const int workers = static_cast<int>(std::min<long>(nt, count));
  std::vector<std::thread> threads;
  threads.reserve(static_cast<size_t>(workers) - 1);
  auto run = [&fn, count, workers](int t) {
    const long lo = count * t / workers;
    const long hi = count * (t + 1) / workers;
    if (lo < hi) fn(lo, hi);
  };
  for (int t = 1; t < workers; ++t) threads.emplace_back(run, t);
  run(0);
  for (auto& th : threads) th.join();
}

template <typename Fn>
void parallel_for(long count, long min_grain, Fn&& fn) {
  parallel_ranges(count, min_grain, [&fn](long lo, long hi) {
    for (long i = lo; i < hi; ++i) fn(i);
  });
}

}  // namespace bnlab::detail
