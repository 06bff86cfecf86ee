#include "nccr/parallel.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace nccr {

void parallel_for(size_t n, const std::function<void(size_t)>& fn, int threads) {
  if (n == 0) return;
  size_t t = threads > 0 ? static_cast<size_t>(threads) : std::thread::hardware_concurrency();
  if (t == 0) t = 1;
  t = std::min(t, n);
  if (t == 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }

  std::atomic<size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  std::vector<std::thread> workers;
  workers.reserve(t);
  for (size_t w = 0; w < t; ++w) {
    workers.emplace_back([&] {
      for (;;) {
        const size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace nccr
