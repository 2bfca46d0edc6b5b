#pragma once

// Globally shared model-call pool.
//
// A fixed set of resources, each executing at most one tool call at a time.
// Callers acquire a lease on a free resource capable of their tool, or queue
// FIFO until a release hands one over. invoke() wraps acquire/execute/release
// with simulated latency, injected transient faults, and at most three total
// attempts, each re-entering allocation.
//
// Fault and latency draws are pure functions of (pool seed, request id,
// attempt), so an invocation's fate does not depend on thread interleaving.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "toolrl/env.hpp"
#include "toolrl/error.hpp"
#include "toolrl/rng.hpp"

namespace toolrl {

struct PoolConfig {
  int num_resources = 8;
  double failure_rate = 0.0;
  double latency_mean_us = 0.0;
  double latency_jitter_us = 0.0;
  double tool_cost_scale = 0.0;  // multiplies ToolSpec::exec_cost_ms into the simulated latency
  std::size_t max_queue_depth = 4096;
  // Per-resource tool lists. Empty means every resource can run every tool.
  std::vector<std::vector<int>> capabilities;
  std::chrono::milliseconds timeout{30000};
  Seed seed = 0;

  void validate() const {
    if (num_resources < 1) throw Error(ErrorCode::InvalidConfig, "pool.num_resources: must be >= 1");
    if (!(failure_rate >= 0.0 && failure_rate < 1.0))
      throw Error(ErrorCode::InvalidConfig, "pool.failure_rate: must be in [0,1)");
    if (latency_mean_us < 0.0 || latency_jitter_us < 0.0 || tool_cost_scale < 0.0)
      throw Error(ErrorCode::InvalidConfig, "pool.latency: must be non-negative");
    if (max_queue_depth < 1) throw Error(ErrorCode::InvalidConfig, "pool.max_queue_depth: must be >= 1");
    if (!capabilities.empty() && static_cast<int>(capabilities.size()) != num_resources)
      throw Error(ErrorCode::InvalidConfig, "pool.capabilities: one entry per resource");
  }
};

struct InvocationRequest {
  std::uint64_t request_id = 0;
  int tool = 0;
  EnvState input;
  std::chrono::milliseconds timeout{30000};
};

struct AttemptRecord {
  int attempt = 0;
  int resource = -1;
  bool failed = false;
};

class ExhaustedRetriesError : public Error {
 public:
  ExhaustedRetriesError(std::uint64_t request_id, std::vector<AttemptRecord> trace)
      : Error(ErrorCode::ExhaustedRetries,
              "request " + std::to_string(request_id) + " failed " + std::to_string(trace.size()) + " attempts"),
        trace_(std::move(trace)) {}

  const std::vector<AttemptRecord>& trace() const noexcept { return trace_; }

 private:
  std::vector<AttemptRecord> trace_;
};

struct ResourceStats {
  int id = 0;
  std::uint64_t completed = 0;
  std::uint64_t failed = 0;
  std::uint64_t retried = 0;
  bool busy = false;
};

struct PoolStats {
  std::vector<ResourceStats> resources;
  std::size_t queue_depth = 0;
  std::size_t max_queue_depth_observed = 0;
  int max_concurrency = 0;
  std::uint64_t mutual_exclusion_violations = 0;
  std::uint64_t requests = 0;
  std::uint64_t requests_completed = 0;
  std::uint64_t requests_retried = 0;
  std::uint64_t requests_exhausted = 0;
  std::uint64_t timeouts = 0;
  int max_attempts_observed = 0;

  std::uint64_t total_completed() const {
    std::uint64_t n = 0;
    for (const auto& r : resources) n += r.completed;
    return n;
  }
  bool all_free() const {
    return std::none_of(resources.begin(), resources.end(), [](const ResourceStats& r) { return r.busy; });
  }
};

class ModelCallPool {
 public:
  static constexpr int kMaxAttempts = 3;

  class Lease {
   public:
    Lease() = default;
    Lease(const Lease&) = delete;
    Lease& operator=(const Lease&) = delete;
    Lease(Lease&& o) noexcept : pool_(std::exchange(o.pool_, nullptr)), resource_(o.resource_) {}
    Lease& operator=(Lease&& o) noexcept {
      if (this != &o) {
        release();
        pool_ = std::exchange(o.pool_, nullptr);
        resource_ = o.resource_;
      }
      return *this;
    }
    ~Lease() { release(); }

    int resource() const { return resource_; }
    bool held() const { return pool_ != nullptr; }
    void release() {
      if (pool_) std::exchange(pool_, nullptr)->release(resource_);
    }

   private:
    friend class ModelCallPool;
    Lease(ModelCallPool* pool, int resource) : pool_(pool), resource_(resource) {}
    ModelCallPool* pool_ = nullptr;
    int resource_ = -1;
  };

  ModelCallPool(EnvConfig env, PoolConfig cfg) : env_(std::move(env)), cfg_(std::move(cfg)) {
    cfg_.validate();
    const std::size_t n_tools = env_.num_tools();
    capable_any_.assign(n_tools, false);
    for (int r = 0; r < cfg_.num_resources; ++r) {
      auto res = std::make_unique<Resource>();
      res->can.assign(n_tools, cfg_.capabilities.empty());
      if (!cfg_.capabilities.empty())
        for (int tool : cfg_.capabilities[static_cast<std::size_t>(r)])
          if (tool >= 0 && static_cast<std::size_t>(tool) < n_tools) res->can[static_cast<std::size_t>(tool)] = true;
      for (std::size_t t = 0; t < n_tools; ++t)
        if (res->can[t]) capable_any_[t] = true;
      resources_.push_back(std::move(res));
    }
  }

  ModelCallPool(const ModelCallPool&) = delete;
  ModelCallPool& operator=(const ModelCallPool&) = delete;
  ~ModelCallPool() { close(); }

  const PoolConfig& config() const { return cfg_; }
  const EnvConfig& env() const { return env_; }

  /// Lease a free resource able to run `tool`, waiting FIFO behind earlier
  /// requests. Throws NoCapableResource, QueueFull, Timeout or PoolClosed.
  Lease acquire(int tool, std::chrono::milliseconds timeout) {
    if (tool < 0 || static_cast<std::size_t>(tool) >= capable_any_.size() ||
        !capable_any_[static_cast<std::size_t>(tool)])
      throw Error(ErrorCode::NoCapableResource, "no resource can run tool " + std::to_string(tool));

    std::unique_lock lock(mu_);
    if (closed_) throw Error(ErrorCode::PoolClosed, "pool closed");
    // Releases hand resources straight to compatible waiters, so a free
    // capable resource here means nobody queued ahead of us wants it.
    for (std::size_t r = 0; r < resources_.size(); ++r) {
      Resource& res = *resources_[r];
      if (!res.busy && res.can[static_cast<std::size_t>(tool)]) {
        res.busy = true;
        return Lease(this, static_cast<int>(r));
      }
    }
    if (waiters_.size() >= cfg_.max_queue_depth)
      throw Error(ErrorCode::QueueFull, "queue depth " + std::to_string(waiters_.size()));

    Waiter self;
    self.tool = tool;
    auto it = waiters_.insert(waiters_.end(), &self);
    max_queue_observed_ = std::max(max_queue_observed_, waiters_.size());
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    const bool woke = self.cv.wait_until(lock, deadline, [&] { return self.granted >= 0 || closed_; });
    if (self.granted >= 0) return Lease(this, self.granted);
    waiters_.erase(it);
    if (!woke) {
      ++timeouts_;
      throw Error(ErrorCode::Timeout, "acquire for tool " + std::to_string(tool));
    }
    throw Error(ErrorCode::PoolClosed, "pool closed while waiting");
  }

  /// Execute one tool call through the pool. The result is exactly
  /// apply_tool(env, request.input, request.tool).
  EnvState invoke(const InvocationRequest& request) {
    requests_.fetch_add(1, std::memory_order_relaxed);
    std::vector<AttemptRecord> trace;
    for (int attempt = 1; attempt <= kMaxAttempts; ++attempt) {
      Lease lease = acquire(request.tool, request.timeout);
      Resource& res = *resources_[static_cast<std::size_t>(lease.resource())];
      if (attempt > 1) res.retried.fetch_add(1, std::memory_order_relaxed);
      note_attempt(attempt);

      begin_execution(res);
      simulate_latency(request, attempt);
      const bool fault = fault_injected(request, attempt);
      EnvState result;
      try {
        if (!fault) result = apply_tool(env_, request.input, request.tool);
      } catch (...) {
        end_execution(res);
        throw;
      }
      end_execution(res);

      trace.push_back({attempt, lease.resource(), fault});
      if (fault) {
        res.failed.fetch_add(1, std::memory_order_relaxed);
        continue;  // lease released at scope exit; the retry re-enters allocation
      }
      res.completed.fetch_add(1, std::memory_order_relaxed);
      requests_completed_.fetch_add(1, std::memory_order_relaxed);
      if (attempt > 1) requests_retried_.fetch_add(1, std::memory_order_relaxed);
      return result;
    }
    requests_retried_.fetch_add(1, std::memory_order_relaxed);
    requests_exhausted_.fetch_add(1, std::memory_order_relaxed);
    throw ExhaustedRetriesError(request.request_id, std::move(trace));
  }

  PoolStats stats() const {
    PoolStats s;
    std::lock_guard lock(mu_);
    for (std::size_t r = 0; r < resources_.size(); ++r) {
      const Resource& res = *resources_[r];
      s.resources.push_back({static_cast<int>(r), res.completed.load(), res.failed.load(), res.retried.load(), res.busy});
    }
    s.queue_depth = waiters_.size();
    s.max_queue_depth_observed = max_queue_observed_;
    s.max_concurrency = max_concurrency_.load();
    s.mutual_exclusion_violations = violations_.load();
    s.requests = requests_.load();
    s.requests_completed = requests_completed_.load();
    s.requests_retried = requests_retried_.load();
    s.requests_exhausted = requests_exhausted_.load();
    s.timeouts = timeouts_;
    s.max_attempts_observed = max_attempts_.load();
    return s;
  }

  /// Wake every waiter with PoolClosed and refuse new acquisitions.
  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    for (Waiter* w : waiters_) w->cv.notify_one();
  }

  /// Whether a transient fault hits this (request, attempt).
  bool fault_injected(const InvocationRequest& request, int attempt) const {
    if (cfg_.failure_rate <= 0.0) return false;
    Rng rng(derive_seed(cfg_.seed, Stream::PoolFault, {request.request_id, static_cast<std::uint64_t>(attempt)}));
    return rng.bernoulli(cfg_.failure_rate);
  }

 private:
  struct Resource {
    std::vector<bool> can;
    bool busy = false;  // guarded by mu_
    std::atomic<int> executing{0};
    std::atomic<std::uint64_t> completed{0};
    std::atomic<std::uint64_t> failed{0};
    std::atomic<std::uint64_t> retried{0};
  };

  struct Waiter {
    int tool = 0;
    int granted = -1;
    std::condition_variable cv;
  };

  void release(int resource) {
    std::lock_guard lock(mu_);
    Resource& res = *resources_[static_cast<std::size_t>(resource)];
    for (auto it = waiters_.begin(); it != waiters_.end(); ++it) {
      Waiter* w = *it;
      if (res.can[static_cast<std::size_t>(w->tool)]) {
        w->granted = resource;  // stays busy: ownership moves to the waiter
        waiters_.erase(it);
        w->cv.notify_one();
        return;
      }
    }
    res.busy = false;
  }

  void begin_execution(Resource& res) {
    if (res.executing.fetch_add(1) != 0) violations_.fetch_add(1);
    const int now = in_flight_.fetch_add(1) + 1;
    int seen = max_concurrency_.load();
    while (now > seen && !max_concurrency_.compare_exchange_weak(seen, now)) {
    }
  }

  void end_execution(Resource& res) {
    in_flight_.fetch_sub(1);
    res.executing.fetch_sub(1);
  }

  void note_attempt(int attempt) {
    int seen = max_attempts_.load();
    while (attempt > seen && !max_attempts_.compare_exchange_weak(seen, attempt)) {
    }
  }

  void simulate_latency(const InvocationRequest& request, int attempt) const {
    double us = cfg_.tool_cost_scale * env_.tools[static_cast<std::size_t>(request.tool)].exec_cost_ms * 1000.0;
    if (cfg_.latency_mean_us > 0.0 || cfg_.latency_jitter_us > 0.0) {
      Rng rng(derive_seed(cfg_.seed, Stream::PoolLatency, {request.request_id, static_cast<std::uint64_t>(attempt)}));
      us += std::max(0.0, cfg_.latency_mean_us + cfg_.latency_jitter_us * (2.0 * rng.uniform() - 1.0));
    }
    if (us > 0.0) std::this_thread::sleep_for(std::chrono::duration<double, std::micro>(us));
  }

  EnvConfig env_;
  PoolConfig cfg_;
  std::vector<bool> capable_any_;
  std::vector<std::unique_ptr<Resource>> resources_;

  mutable std::mutex mu_;
  std::list<Waiter*> waiters_;
  std::size_t max_queue_observed_ = 0;
  std::uint64_t timeouts_ = 0;
  bool closed_ = false;

  std::atomic<int> in_flight_{0};
  std::atomic<int> max_concurrency_{0};
  std::atomic<int> max_attempts_{0};
  std::atomic<std::uint64_t> violations_{0};
  std::atomic<std::uint64_t> requests_{0};
  std::atomic<std::uint64_t> requests_completed_{0};
  std::atomic<std::uint64_t> requests_retried_{0};
  std::atomic<std::uint64_t> requests_exhausted_{0};
};

}  // namespace toolrl
