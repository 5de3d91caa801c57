#include "rsdp/parallel.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace rsdp {

int default_workers() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Work items land in caller-owned per-index slots, so the reduction order is
// fixed by the caller and the result cannot depend on the worker count.
void parallel_for(long count, int workers, const std::function<void(long)>& fn) {
  if (count <= 0) return;
  if (workers <= 1 || count == 1) {
    for (long k = 0; k < count; ++k) fn(k);
    return;
  }
  const int nthreads = static_cast<int>(std::min<long>(workers, count));
  std::atomic<long> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  for (int w = 0; w < nthreads; ++w) {
    pool.emplace_back([&]() {
      while (true) {
        const long k = next.fetch_add(1);
        if (k >= count) return;
        {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (first_error) return;
        }
        try {
          fn(k);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace rsdp
