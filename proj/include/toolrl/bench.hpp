#pragma once

// Pool stress scenario: fire a burst of concurrent tool calls at one pool and
// check the protocol afterwards. Shared by `pool-bench` and the tests.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <vector>

#include "toolrl/pool.hpp"
#include "toolrl/trainer.hpp"

namespace toolrl {

struct PoolBenchConfig {
  int requests = 512;     // b * g
  int concurrency = 512;  // callers in flight at once
  PoolConfig pool;
};

struct PoolBenchResult {
  PoolStats stats;
  std::uint64_t succeeded = 0;
  std::uint64_t exhausted = 0;
  std::uint64_t other_errors = 0;
  std::uint64_t mismatches = 0;  // pooled result differs from apply_tool
  std::uint64_t bad_traces = 0;  // exhausted without exactly kMaxAttempts recorded attempts
  std::uint64_t expected_retried = 0;
  std::uint64_t expected_exhausted = 0;
  double seconds = 0.0;

  bool settled() const { return succeeded + exhausted + other_errors == stats.requests; }
};

inline InvocationRequest bench_request(const EnvConfig& env, Seed seed, std::size_t i) {
  InvocationRequest r;
  r.request_id = i;
  r.tool = static_cast<int>(i % env.num_tools());
  r.input = init_state(env, derive_seed(seed, Stream::PoolBench, {i}));
  r.timeout = std::chrono::milliseconds(60000);
  return r;
}

/// Runs the burst. expected_* replay the pool's own fault draws serially, so
/// the counters can be compared against a schedule-free reference.
inline PoolBenchResult run_pool_bench(const EnvConfig& env, const PoolBenchConfig& cfg) {
  ModelCallPool pool(env, cfg.pool);
  const auto n = static_cast<std::size_t>(cfg.requests);
  PoolBenchResult out;
  std::mutex mu;
  InFlightGauge gauge;
  const auto t0 = std::chrono::steady_clock::now();
  parallel_for(n, cfg.concurrency, cfg.concurrency, gauge, [&](std::size_t i) {
    const InvocationRequest req = bench_request(env, cfg.pool.seed, i);
    try {
      const EnvState got = pool.invoke(req);
      const bool same = got == apply_tool(env, req.input, req.tool);
      std::lock_guard lock(mu);
      ++out.succeeded;
      if (!same) ++out.mismatches;
    } catch (const ExhaustedRetriesError& e) {
      std::lock_guard lock(mu);
      ++out.exhausted;
      if (e.trace().size() != static_cast<std::size_t>(ModelCallPool::kMaxAttempts)) ++out.bad_traces;
    } catch (const Error&) {
      std::lock_guard lock(mu);
      ++out.other_errors;
    }
  });
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.stats = pool.stats();

  for (std::size_t i = 0; i < n; ++i) {
    const InvocationRequest req = bench_request(env, cfg.pool.seed, i);
    int failures = 0;
    while (failures < ModelCallPool::kMaxAttempts && pool.fault_injected(req, failures + 1)) ++failures;
    if (failures > 0) ++out.expected_retried;
    if (failures == ModelCallPool::kMaxAttempts) ++out.expected_exhausted;
  }
  return out;
}

/// |observed - n p| <= 3 sqrt(n p (1 - p)).
inline bool within_3sigma(std::uint64_t observed, std::uint64_t n, double p) {
  const double mean = static_cast<double>(n) * p;
  const double sd = std::sqrt(static_cast<double>(n) * p * (1.0 - p));
  return std::abs(static_cast<double>(observed) - mean) <= 3.0 * sd;
}

}  // namespace toolrl
