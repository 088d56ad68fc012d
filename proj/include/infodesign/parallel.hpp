#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace infodesign {

/// Worker count used by batch evaluations. Defaults to $INFODESIGN_THREADS, else 1.
int thread_count();
void set_thread_count(int n);

/// Rows per work unit. Reductions sum per-chunk partials in chunk order, so
/// results do not depend on the number of workers.
inline constexpr std::size_t kChunkRows = 512;

inline std::size_t chunk_count(std::size_t rows) {
  return (rows + kChunkRows - 1) / kChunkRows;
}

/// Calls fn(chunk) for every chunk in [0, n_chunks), striding chunks over workers.
template <class Fn>
void for_each_chunk(std::size_t n_chunks, Fn&& fn) {
  const auto workers = static_cast<std::size_t>(
      std::clamp<std::size_t>(static_cast<std::size_t>(thread_count()), 1, std::max<std::size_t>(n_chunks, 1)));
  if (workers <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) fn(c);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t c = w; c < n_chunks; c += workers) fn(c);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace infodesign
