#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace hmc_lab {

/// Number of worker threads used by Monte Carlo fan-outs. Results never
/// depend on this value: work is cut into fixed chunks, each chunk owns
/// its rng stream, and chunk results are reduced in chunk order.
struct Parallelism {
  unsigned workers = 1;

  static Parallelism hardware() {
    return {std::max(1u, std::thread::hardware_concurrency())};
  }
};

/// Runs fn(chunk) for chunk in [0, n_chunks) on up to `workers` threads and
/// returns the per-chunk results in chunk order. The first exception thrown
/// by any chunk (lowest chunk index) is rethrown after all workers join.
template <typename Fn>
auto map_chunks(std::size_t n_chunks, Parallelism par, Fn&& fn)
    -> std::vector<decltype(fn(std::size_t{}))> {
  using Result = decltype(fn(std::size_t{}));
  std::vector<Result> results(n_chunks);
  std::vector<std::exception_ptr> errors(n_chunks);

  const unsigned n_threads =
      static_cast<unsigned>(std::min<std::size_t>(std::max(1u, par.workers), n_chunks));
  if (n_threads <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) results[c] = fn(c);
    return results;
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= n_chunks) return;
      try {
        results[c] = fn(c);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

/// Splits n items into chunks of `chunk` items (last one may be short).
struct ChunkPlan {
  std::size_t n;
  std::size_t chunk;

  std::size_t count() const { return chunk == 0 ? 0 : (n + chunk - 1) / chunk; }
  std::size_t begin(std::size_t c) const { return c * chunk; }
  std::size_t end(std::size_t c) const { return std::min(n, (c + 1) * chunk); }
};

}  // namespace hmc_lab
