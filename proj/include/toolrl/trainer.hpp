#pragma once

// Group-rollout policy-gradient training and the ablation pipeline.
//
// Each step samples b initial states, draws g rollouts per state through the
// model-call pool, standardizes terminal rewards within each group according
// to the reward mode, and takes one advantage-weighted REINFORCE step:
//
//   theta += lr / (b g) * sum_ij A_ij * sum_k grad log pi(a_k | s_k, h_k)
//
// Rollout RNG streams are keyed by (seed, step, sample, rollout) and results
// are reduced in index order, so reports do not depend on the worker count.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "toolrl/demo.hpp"
#include "toolrl/diversity.hpp"
#include "toolrl/mar.hpp"
#include "toolrl/policy.hpp"
#include "toolrl/pool.hpp"

namespace toolrl {

/// Tracks how many jobs run at once.
class InFlightGauge {
 public:
  void enter() {
    const int now = current_.fetch_add(1) + 1;
    int seen = max_.load();
    while (now > seen && !max_.compare_exchange_weak(seen, now)) {
    }
  }
  void leave() { current_.fetch_sub(1); }
  int max_observed() const { return max_.load(); }
  void reset() { max_.store(0); }

 private:
  std::atomic<int> current_{0};
  std::atomic<int> max_{0};
};

/// Run fn(i) for i in [0, n) on up to min(workers, max_in_flight) threads.
/// The first exception thrown by any job is rethrown after all threads join.
template <typename Fn>
void parallel_for(std::size_t n, int workers, int max_in_flight, InFlightGauge& gauge, Fn&& fn) {
  const std::size_t threads =
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, std::min(workers, max_in_flight))));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mu;
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      gauge.enter();
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
        failed.store(true);
      }
      gauge.leave();
    }
  };
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
  }
  if (error) std::rethrow_exception(error);
}

struct TrainConfig {
  int batch_size = 64;
  int group_size = 8;
  int max_parallel_rollouts = 128;
  int workers = 4;
  int steps = 40;
  double lr = 0.5;
  RewardMode reward_mode = RewardMode::Mar;
  MarConfig mar;
  bool mar_per_group = false;  // update MAR once per rollout group instead of once per batch
  std::chrono::milliseconds invoke_timeout{30000};
  Seed seed = 0;

  void validate() const {
    if (batch_size < 1) throw Error(ErrorCode::InvalidConfig, "train.batch_size: must be >= 1");
    if (group_size < 1) throw Error(ErrorCode::InvalidConfig, "train.group_size: must be >= 1");
    if (max_parallel_rollouts < 1) throw Error(ErrorCode::InvalidConfig, "train.max_parallel_rollouts: must be >= 1");
    if (workers < 1) throw Error(ErrorCode::InvalidConfig, "train.workers: must be >= 1");
    if (steps < 0) throw Error(ErrorCode::InvalidConfig, "train.steps: must be >= 0");
    if (!std::isfinite(lr)) throw Error(ErrorCode::InvalidConfig, "train.lr: must be finite");
    mar.validate();
  }
};

struct StepReport {
  int step = 0;
  double mean_length = 0.0;
  double surrogate_loss = 0.0;  // -mean(A * log pi(trajectory))
  double grad_norm = 0.0;
  Vector batch_reward;  // per-metric mean terminal reward
  Vector ema;
  Vector deviation;
  Vector weights;
  double distinct_fraction = 0.0;
  double order_fraction = 0.0;
  double tool_fraction = 0.0;
  double identical_fraction = 0.0;
  double tool_entropy = 0.0;
  std::vector<double> tool_entropy_per_task;  // negative for tasks no rollout used
  // Instrumentation; depends on scheduling and is kept out of digests.
  int max_in_flight = 0;
};

struct TrainStepResult {
  PolicyParams params;
  MarState mar;
  StepReport report;
};

inline std::uint64_t rollout_request_base(int step, std::size_t rollout) {
  return (static_cast<std::uint64_t>(step) << 40) | (static_cast<std::uint64_t>(rollout) << 8);
}

/// Executes tool calls through the shared pool.
struct PooledRunner {
  ModelCallPool* pool;
  std::uint64_t base_id;
  std::chrono::milliseconds timeout;

  EnvState operator()(const EnvState& state, int tool, std::size_t k) const {
    return pool->invoke({base_id + k, tool, state, timeout});
  }
};

inline TrainStepResult train_step(const PolicyParams& params, const MarState& mar, const TrainConfig& cfg,
                                  const EnvConfig& env, ModelCallPool& pool, int step_index) {
  const std::size_t b = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t g = static_cast<std::size_t>(cfg.group_size);

  std::vector<EnvState> starts(b);
  for (std::size_t i = 0; i < b; ++i)
    starts[i] = init_state(env, derive_seed(cfg.seed, Stream::TrainState, {static_cast<std::uint64_t>(step_index), i}));

  std::vector<Trajectory> rollouts(b * g);
  InFlightGauge gauge;
  parallel_for(b * g, cfg.workers, cfg.max_parallel_rollouts, gauge, [&](std::size_t job) {
    const std::size_t i = job / g;
    const std::size_t j = job % g;
    const Seed seed = derive_seed(cfg.seed, Stream::Rollout, {static_cast<std::uint64_t>(step_index), i, j});
    rollouts[job] = rollout(params, env, starts[i], seed,
                            PooledRunner{&pool, rollout_request_base(step_index, job), cfg.invoke_timeout});
  });

  const auto R = static_cast<Eigen::Index>(env.num_metrics());
  Vector batch_mean = Vector::Zero(R);
  for (const Trajectory& t : rollouts) batch_mean += t.final_metrics;
  batch_mean /= static_cast<double>(rollouts.size());

  MarState next_mar = mar;
  if (!cfg.mar_per_group) next_mar = observe_batch(batch_mean, next_mar);

  std::vector<double> advantages(b * g, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    Matrix group(static_cast<Eigen::Index>(g), R);
    for (std::size_t j = 0; j < g; ++j) group.row(static_cast<Eigen::Index>(j)) = rollouts[i * g + j].final_metrics;
    if (cfg.mar_per_group) next_mar = observe_batch(group.colwise().mean().transpose(), next_mar);
    if (g < 2) continue;
    const Vector adv = reward_advantages(group, cfg.reward_mode, next_mar);
    for (std::size_t j = 0; j < g; ++j) advantages[i * g + j] = adv[static_cast<Eigen::Index>(j)];
  }

  Matrix grad = Matrix::Zero(params.theta.rows(), params.theta.cols());
  double surrogate = 0.0;
  double total_length = 0.0;
  for (std::size_t n = 0; n < rollouts.size(); ++n) {
    total_length += static_cast<double>(rollouts[n].length());
    if (advantages[n] == 0.0) continue;
    grad += advantages[n] * trajectory_score(params, env, rollouts[n]);
    const auto hist = histories(env, rollouts[n]);
    double lp = 0.0;
    for (std::size_t k = 0; k < rollouts[n].steps.size(); ++k)
      lp += log_prob(params, env, rollouts[n].states[k], hist[k], rollouts[n].steps[k].tool);
    lp += log_prob(params, env, rollouts[n].final_state(), hist.back(), terminate_index(env));
    surrogate -= advantages[n] * lp;
  }
  const double scale = 1.0 / static_cast<double>(rollouts.size());
  grad *= scale;

  TrainStepResult out{params, next_mar, {}};
  if (grad.squaredNorm() > 0.0) out.params.theta += cfg.lr * grad;

  StepReport& rep = out.report;
  rep.step = step_index;
  rep.mean_length = total_length * scale;
  rep.surrogate_loss = surrogate * scale;
  rep.grad_norm = grad.norm();
  rep.batch_reward = batch_mean;
  rep.ema = next_mar.ema;
  rep.deviation = next_mar.deviation;
  rep.weights = next_mar.weights;
  const DiversityReport div = diversity_stats(env, rollouts, g);
  rep.distinct_fraction = div.distinct_fraction;
  rep.order_fraction = div.order_fraction;
  rep.tool_fraction = div.tool_fraction;
  rep.identical_fraction = div.identical_fraction;
  rep.tool_entropy = div.tool_entropy.mean;
  rep.tool_entropy_per_task = div.tool_entropy.per_task;
  rep.max_in_flight = gauge.max_observed();
  return out;
}

// Evaluation on held-out initial states.

struct EvalConfig {
  int num_states = 256;
  int group_size = 8;

  void validate() const {
    if (num_states < 1) throw Error(ErrorCode::InvalidConfig, "eval.num_states: must be >= 1");
    if (group_size < 1) throw Error(ErrorCode::InvalidConfig, "eval.group_size: must be >= 1");
  }
};

struct EvalReport {
  Vector mean_metrics;
  double mean_score = 0.0;  // equal-weight mean over metrics
  double worst_metric = 0.0;
  int worst_index = 0;
  double mean_length = 0.0;
  DiversityReport diversity;
};

inline EnvState eval_initial_state(const EnvConfig& env, Seed seed, std::size_t k) {
  return init_state(env, derive_seed(seed, Stream::EvalState, {k}));
}

inline EvalReport evaluate(const PolicyParams& params, const EnvConfig& env, const EvalConfig& cfg, Seed seed,
                           int workers = 1) {
  cfg.validate();
  const std::size_t n = static_cast<std::size_t>(cfg.num_states);
  const std::size_t g = static_cast<std::size_t>(cfg.group_size);
  std::vector<Trajectory> rollouts(n * g);
  InFlightGauge gauge;
  parallel_for(n * g, workers, workers, gauge, [&](std::size_t job) {
    const std::size_t k = job / g;
    rollouts[job] = rollout(params, env, eval_initial_state(env, seed, k),
                            derive_seed(seed, Stream::EvalRollout, {k, job % g}));
  });

  EvalReport rep;
  rep.mean_metrics = Vector::Zero(static_cast<Eigen::Index>(env.num_metrics()));
  for (const Trajectory& t : rollouts) {
    rep.mean_metrics += t.final_metrics;
    rep.mean_length += static_cast<double>(t.length());
  }
  rep.mean_metrics /= static_cast<double>(rollouts.size());
  rep.mean_length /= static_cast<double>(rollouts.size());
  rep.mean_score = rep.mean_metrics.mean();
  Eigen::Index worst = 0;
  rep.worst_metric = rep.mean_metrics.minCoeff(&worst);
  rep.worst_index = static_cast<int>(worst);
  rep.diversity = diversity_stats(env, rollouts, g);
  return rep;
}

// Ablation pipeline.

enum class Ablation { Vanilla, NoSft, NoRl, NoEdp, NoAlphaT, NoAlphaM, NoMar, NoDecouple, NoWeights, Full };

inline constexpr Ablation kAllAblations[] = {Ablation::Vanilla,  Ablation::NoSft,     Ablation::NoRl,
                                             Ablation::NoEdp,    Ablation::NoAlphaT,  Ablation::NoAlphaM,
                                             Ablation::NoMar,    Ablation::NoDecouple, Ablation::NoWeights,
                                             Ablation::Full};

inline std::string_view to_string(Ablation a) {
  switch (a) {
    case Ablation::Vanilla: return "vanilla";
    case Ablation::NoSft: return "no_sft";
    case Ablation::NoRl: return "no_rl";
    case Ablation::NoEdp: return "no_edp";
    case Ablation::NoAlphaT: return "no_alpha_t";
    case Ablation::NoAlphaM: return "no_alpha_m";
    case Ablation::NoMar: return "no_mar";
    case Ablation::NoDecouple: return "no_decouple";
    case Ablation::NoWeights: return "no_weights";
    case Ablation::Full: return "full";
  }
  return "?";
}

inline Ablation parse_ablation(std::string_view s) {
  for (Ablation a : kAllAblations)
    if (to_string(a) == s) return a;
  throw Error(ErrorCode::UnknownMode, "ablation mode '" + std::string(s) + "'");
}

struct ExperimentConfig {
  EnvConfig env;
  EdpConfig edp;
  SftConfig sft;
  TrainConfig train;
  PoolConfig pool;
  EvalConfig eval;
  std::size_t num_demos = 200;
  Seed seed = 0;

  /// Propagate the master seed into every stage.
  void apply_seed(Seed s) {
    seed = s;
    edp.seed = s;
    train.seed = s;
    pool.seed = s;
  }

  void validate() const {
    env.validate();
    edp.validate();
    train.validate();
    pool.validate();
    eval.validate();
    if (num_demos < 1) throw Error(ErrorCode::InvalidConfig, "demos.count: must be >= 1");
    if (sft.epochs < 0) throw Error(ErrorCode::InvalidConfig, "sft.epochs: must be >= 0");
  }
};

/// What each ablation keeps of the full pipeline.
struct PipelinePlan {
  bool edp = true;
  double alpha_t = 0.3;
  double alpha_m = 0.4;
  bool sft = true;
  bool rl = true;
  RewardMode reward = RewardMode::Mar;
};

inline PipelinePlan plan_for(Ablation mode, const ExperimentConfig& cfg) {
  PipelinePlan p;
  p.alpha_t = cfg.edp.alpha_t;
  p.alpha_m = cfg.edp.alpha_m;
  switch (mode) {
    case Ablation::Full: break;
    case Ablation::Vanilla:
      p.edp = false;
      p.reward = RewardMode::Vanilla;
      break;
    case Ablation::NoSft:
      p.edp = false;
      p.sft = false;
      break;
    case Ablation::NoRl: p.rl = false; break;
    case Ablation::NoEdp: p.edp = false; break;
    case Ablation::NoAlphaT: p.alpha_t = 0.0; break;
    case Ablation::NoAlphaM: p.alpha_m = 0.0; break;
    case Ablation::NoMar: p.reward = RewardMode::Vanilla; break;
    case Ablation::NoDecouple: p.reward = RewardMode::NoDecouple; break;
    case Ablation::NoWeights: p.reward = RewardMode::NoWeights; break;
  }
  return p;
}

struct ExperimentReport {
  Ablation mode = Ablation::Full;
  PipelinePlan plan;
  std::size_t num_demos = 0;
  std::size_t sft_set_size = 0;
  std::size_t sft_examples = 0;
  double sft_log_likelihood = 0.0;
  EvalReport sft_eval;  // policy after SFT, before RL
  std::vector<StepReport> curve;
  EvalReport eval;  // final policy
  PolicyParams params;
  MarState mar;
  PoolStats pool;  // scheduling-dependent; not part of the digest
};

/// Demo generation, optional perturbation, behavior cloning, optional RL, and
/// held-out evaluation. `workers` overrides the configured worker count.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg, Ablation mode,
                                       std::optional<int> workers = std::nullopt) {
  cfg.validate();
  ExperimentReport rep;
  rep.mode = mode;
  rep.plan = plan_for(mode, cfg);
  const PipelinePlan& plan = rep.plan;
  TrainConfig train = cfg.train;
  if (workers) train.workers = *workers;
  train.reward_mode = plan.reward;

  PolicyParams params = PolicyParams::zeros(cfg.env);
  if (plan.sft) {
    DemoSet demos = generate_oracle_demos(cfg.env, cfg.num_demos, cfg.seed);
    rep.num_demos = demos.size();
    if (plan.edp) {
      EdpConfig edp = cfg.edp;
      edp.alpha_t = plan.alpha_t;
      edp.alpha_m = plan.alpha_m;
      demos = build_sft_set(demos, edp, cfg.env);
    }
    rep.sft_set_size = demos.size();
    SftResult sft = sft_update(params, demos, cfg.env, cfg.sft);
    rep.sft_examples = sft.num_examples;
    rep.sft_log_likelihood = sft.final_log_likelihood();
    params = std::move(sft.params);
  }
  rep.sft_eval = evaluate(params, cfg.env, cfg.eval, cfg.seed, train.workers);

  MarState mar = MarState::uniform(static_cast<int>(cfg.env.num_metrics()), train.mar);
  if (plan.rl && train.steps > 0) {
    ModelCallPool pool(cfg.env, cfg.pool);
    for (int step = 0; step < train.steps; ++step) {
      TrainStepResult r = train_step(params, mar, train, cfg.env, pool, step);
      params = std::move(r.params);
      mar = std::move(r.mar);
      rep.curve.push_back(std::move(r.report));
    }
    rep.pool = pool.stats();
    rep.eval = evaluate(params, cfg.env, cfg.eval, cfg.seed, train.workers);
  } else {
    rep.eval = rep.sft_eval;
  }
  rep.params = std::move(params);
  rep.mar = std::move(mar);
  return rep;
}

}  // namespace toolrl
