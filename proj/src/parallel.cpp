#include "fetrack/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <utility>
#include <vector>

namespace fetrack {

namespace {

std::atomic<int> g_threads{0};

// Below this many items per chunk threading costs more than it saves.
constexpr std::size_t kMinChunk = 64;

}  // namespace

void set_thread_count(int n) { g_threads = std::max(0, n); }

int thread_count() {
  const int n = g_threads.load();
  if (n > 0) return n;
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

std::size_t chunk_count(std::size_t n) {
  if (n == 0) return 0;
  const std::size_t by_size = (n + kMinChunk - 1) / kMinChunk;
  return std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(thread_count()), by_size));
}

std::pair<std::size_t, std::size_t> chunk_range(std::size_t n, std::size_t k) {
  const std::size_t c = chunk_count(n);
  return {n * k / c, n * (k + 1) / c};
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
  const std::size_t c = chunk_count(n);
  if (c <= 1) {
    if (n > 0) body(0, n);
    return;
  }
  std::vector<std::exception_ptr> errors(c);
  std::vector<std::thread> workers;
  workers.reserve(c - 1);
  for (std::size_t k = 1; k < c; ++k) {
    workers.emplace_back([&, k] {
      try {
        const auto [b, e] = chunk_range(n, k);
        body(b, e);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  }
  try {
    const auto [b, e] = chunk_range(n, 0);
    body(b, e);
  } catch (...) {
    errors[0] = std::current_exception();
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace fetrack
