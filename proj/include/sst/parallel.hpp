#pragma once

#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace sst {

/// Deterministic fork-join helper: splits [0, n) into at most `workers`
/// contiguous chunks. Chunk boundaries depend only on (n, workers), so any
/// computation whose outputs are disjoint per index is bit-identical
/// regardless of scheduling.
inline void parallel_for(int64_t n, int workers,
                         const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  if (workers <= 1 || n == 1) {
    fn(0, n);
    return;
  }
  int chunks = static_cast<int>(std::min<int64_t>(workers, n));
  int64_t base = n / chunks;
  int64_t rem = n % chunks;
  std::vector<std::thread> threads;
  threads.reserve(chunks - 1);
  int64_t begin = 0;
  for (int c = 0; c < chunks; ++c) {
    int64_t len = base + (c < rem ? 1 : 0);
    int64_t end = begin + len;
    if (c + 1 == chunks) {
      fn(begin, end);
    } else {
      threads.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    begin = end;
  }
  for (auto& t : threads) t.join();
}

}  // namespace sst
