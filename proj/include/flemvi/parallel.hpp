#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

#include "flemvi/numerics.hpp"

namespace flemvi {

/// Runs fn(r) for r in [0, count) on up to `jobs` threads and returns the
/// results indexed by r, so the outcome does not depend on scheduling.
template <class Fn>
auto run_replicas(std::size_t count, std::size_t jobs, Fn&& fn) -> std::vector<decltype(fn(std::size_t{}))> {
  using Result = decltype(fn(std::size_t{}));
  std::vector<Result> results(count);
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(count, 1));
  if (jobs == 1) {
    for (std::size_t r = 0; r < count; ++r) results[r] = fn(r);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t r = next.fetch_add(1);
      if (r >= count) return;
      try {
        results[r] = fn(r);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(count);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return results;
}

struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t count = 0;
};

/// Sample mean and plain Monte Carlo standard error.
inline Estimate summarize(std::span<const double> samples) {
  Estimate e;
  e.count = samples.size();
  if (samples.empty()) return e;
  e.mean = compensated_sum(samples) / static_cast<double>(samples.size());
  if (samples.size() < 2) return e;
  CompensatedSum ss;
  for (double v : samples) ss += (v - e.mean) * (v - e.mean);
  const double n = static_cast<double>(samples.size());
  e.std_error = std::sqrt(ss.value() / (n - 1.0) / n);
  return e;
}

}  // namespace flemvi
