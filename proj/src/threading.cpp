#include "mftg/threading.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace mftg {

namespace {
std::atomic<int> g_threads{0};  // 0 = not set yet
}

int thread_count() {
  int n = g_threads.load(std::memory_order_relaxed);
  if (n > 0) return n;
  n = static_cast<int>(std::thread::hardware_concurrency());
  return n > 0 ? n : 1;
}

void set_thread_count(int n) {
  g_threads.store(std::max(n, 1), std::memory_order_relaxed);
}

void parallel_for(int n, const std::function<void(int)>& body) {
  if (n <= 0) return;
  const int workers = std::min(thread_count(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1, std::memory_order_relaxed);
        if (i >= n) return;
        body(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace mftg
