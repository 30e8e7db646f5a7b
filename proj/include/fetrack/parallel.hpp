#pragma once

#include <cstddef>
#include <functional>

namespace fetrack {

/// Worker count used by parallel_for; 0 means hardware concurrency.
void set_thread_count(int n);
int thread_count();

/// Runs body(begin, end) over contiguous chunks of [0, n). Chunk boundaries
/// depend only on n and the thread count, never on timing, so reductions
/// that combine per-chunk results in chunk order are deterministic.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

/// Number of chunks parallel_for splits [0, n) into, and the bounds of chunk k.
std::size_t chunk_count(std::size_t n);
std::pair<std::size_t, std::size_t> chunk_range(std::size_t n, std::size_t k);

}  // namespace fetrack
