#include "meshsplat/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace meshsplat {

int worker_count() {
  static const int count = [] {
    if (const char* env = std::getenv("MESHSPLAT_THREADS")) {
      const int n = std::atoi(env);
      if (n >= 0) return n == 0 ? 1 : n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
  }();
  return count;
}

int chunk_count(std::int64_t n, std::int64_t chunk_size) {
  if (n <= 0) return 0;
  return static_cast<int>((n + chunk_size - 1) / chunk_size);
}

void parallel_chunks(std::int64_t n, std::int64_t chunk_size,
                     const std::function<void(int, std::int64_t, std::int64_t)>& fn) {
  const int chunks = chunk_count(n, chunk_size);
  if (chunks == 0) return;
  const int threads = std::min(worker_count(), chunks);
  if (threads <= 1) {
    for (int c = 0; c < chunks; ++c) {
      fn(c, c * chunk_size, std::min<std::int64_t>(n, (c + 1) * chunk_size));
    }
    return;
  }
  std::atomic<int> next{0};
  auto work = [&] {
    for (;;) {
      const int c = next.fetch_add(1, std::memory_order_relaxed);
      if (c >= chunks) break;
      fn(c, c * chunk_size, std::min<std::int64_t>(n, (c + 1) * chunk_size));
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  for (int t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
}

void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn) {
  // Chunk size balances scheduling overhead against load imbalance.
  const std::int64_t chunk = std::max<std::int64_t>(1, n / (8 * worker_count()));
  parallel_chunks(n, chunk, [&](int, std::int64_t begin, std::int64_t end) {
    for (std::int64_t i = begin; i < end; ++i) fn(i);
  });
}

}  // namespace meshsplat
