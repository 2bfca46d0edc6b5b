#pragma once

// Demonstration data: greedy oracle trajectories and exploration-driven
// perturbation of them (task-order permutation and tool resampling).

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "toolrl/env.hpp"
#include "toolrl/rng.hpp"

namespace toolrl {

struct Step {
  int task = 0;
  int tool = 0;
  friend bool operator==(const Step&, const Step&) = default;
  friend auto operator<=>(const Step&, const Step&) = default;
};

struct Trajectory {
  std::vector<Step> steps;
  std::vector<EnvState> states;  // steps.size() + 1 entries
  MetricVector final_metrics;

  std::size_t length() const { return steps.size(); }
  const EnvState& initial() const { return states.front(); }
  const EnvState& final_state() const { return states.back(); }
};

enum Provenance : std::uint8_t {
  kOracle = 0,
  kOrderPerturbed = 1 << 0,
  kToolPerturbed = 1 << 1,
};

inline std::string provenance_name(std::uint8_t p) {
  if (p == kOracle) return "oracle";
  if (p == kOrderPerturbed) return "order";
  if (p == kToolPerturbed) return "tool";
  if (p == (kOrderPerturbed | kToolPerturbed)) return "order+tool";
  throw Error(ErrorCode::Parse, "bad provenance bits " + std::to_string(p));
}

inline std::uint8_t parse_provenance(const std::string& s) {
  if (s == "oracle") return kOracle;
  if (s == "order") return kOrderPerturbed;
  if (s == "tool") return kToolPerturbed;
  if (s == "order+tool") return kOrderPerturbed | kToolPerturbed;
  throw Error(ErrorCode::Parse, "unknown provenance '" + s + "'");
}

/// One demonstration. The clean reference is implicit: d = 0.
struct DemoItem {
  Trajectory trajectory;
  std::uint8_t provenance = kOracle;

  const EnvState& initial() const { return trajectory.initial(); }
};

struct DemoSet {
  std::vector<DemoItem> items;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }
};

struct EdpConfig {
  double alpha_t = 0.3;
  double alpha_m = 0.4;
  Seed seed = 0;

  void validate() const {
    if (!(alpha_t >= 0.0 && alpha_t <= 1.0)) throw Error(ErrorCode::InvalidConfig, "edp.alpha_t: must be in [0,1]");
    if (!(alpha_m >= 0.0 && alpha_m <= 1.0)) throw Error(ErrorCode::InvalidConfig, "edp.alpha_m: must be in [0,1]");
  }
};

/// Rebuild a trajectory by running `steps` from `initial`. Throws
/// InvalidAction when a tool does not serve its step's task.
inline Trajectory replay(const EnvConfig& config, const EnvState& initial, std::vector<Step> steps) {
  Trajectory traj;
  traj.states.reserve(steps.size() + 1);
  traj.states.push_back(initial);
  for (const Step& s : steps) {
    if (s.tool < 0 || s.tool >= static_cast<int>(config.tools.size()) ||
        config.tools[static_cast<std::size_t>(s.tool)].task != s.task)
      throw Error(ErrorCode::InvalidAction,
                  "tool " + std::to_string(s.tool) + " does not serve task " + std::to_string(s.task));
    traj.states.push_back(apply_tool(config, traj.states.back(), s.tool));
  }
  traj.steps = std::move(steps);
  traj.final_metrics = measure(traj.states.back(), config);
  return traj;
}

inline bool replays_exactly(const EnvConfig& config, const Trajectory& traj) {
  if (traj.states.size() != traj.steps.size() + 1) return false;
  const Trajectory again = replay(config, traj.initial(), traj.steps);
  for (std::size_t k = 0; k < again.states.size(); ++k)
    if (!(again.states[k] == traj.states[k])) return false;
  return (again.final_metrics.array() == traj.final_metrics.array()).all();
}

/// Greedy one-step lookahead on the equal-weight metric mean: apply the best
/// restoration action while it strictly improves the mean.
inline Trajectory greedy_oracle(const EnvConfig& config, const EnvState& initial) {
  std::vector<Step> steps;
  EnvState cur = initial;
  double cur_score = measure(cur, config).mean();
  while (cur.step < config.max_horizon) {
    int best_tool = -1;
    double best_score = cur_score;
    EnvState best_state;
    for (std::size_t i = 0; i < config.tools.size(); ++i) {
      EnvState next = apply_tool(config, cur, static_cast<int>(i));
      const double score = measure(next, config).mean();
      if (score > best_score) {
        best_score = score;
        best_tool = static_cast<int>(i);
        best_state = std::move(next);
      }
    }
    if (best_tool < 0) break;
    steps.push_back({config.tools[static_cast<std::size_t>(best_tool)].task, best_tool});
    cur = std::move(best_state);
    cur_score = best_score;
  }
  return replay(config, initial, std::move(steps));
}

inline EnvState oracle_initial_state(const EnvConfig& config, Seed seed, std::size_t episode) {
  return init_state(config, derive_seed(seed, Stream::OracleEpisode, {episode}));
}

inline DemoSet generate_oracle_demos(const EnvConfig& config, std::size_t n, Seed seed) {
  if (n == 0) throw Error(ErrorCode::InvalidConfig, "demos: n must be at least 1");
  DemoSet out;
  out.items.reserve(n);
  for (std::size_t e = 0; e < n; ++e)
    out.items.push_back({greedy_oracle(config, oracle_initial_state(config, seed, e)), kOracle});
  return out;
}

/// Task-order perturbation: each item is selected independently with
/// probability alpha_t; selected items are copied with their steps uniformly
/// permuted, replayed, and appended after all originals.
inline DemoSet perturb_order(const DemoSet& demos, const EdpConfig& cfg, const EnvConfig& config) {
  cfg.validate();
  DemoSet out = demos;
  for (std::size_t i = 0; i < demos.items.size(); ++i) {
    Rng select(derive_seed(cfg.seed, Stream::OrderSelect, {i}));
    if (!select.bernoulli(cfg.alpha_t)) continue;
    const DemoItem& src = demos.items[i];
    std::vector<Step> steps = src.trajectory.steps;
    Rng permute(derive_seed(cfg.seed, Stream::OrderPermute, {i}));
    permute.shuffle(std::span<Step>(steps));
    out.items.push_back(
        {replay(config, src.initial(), std::move(steps)), static_cast<std::uint8_t>(src.provenance | kOrderPerturbed)});
  }
  return out;
}

/// The mixture (1 - alpha) P(m|t) + alpha U(m|t), with P the empirical tool
/// frequency per task over a demo set.
class ToolMixture {
 public:
  ToolMixture(const EnvConfig& config, const DemoSet& demos, double alpha) : alpha_(alpha) {
    tools_.resize(config.num_tasks());
    base_.resize(config.num_tasks());
    for (std::size_t t = 0; t < config.num_tasks(); ++t) {
      tools_[t] = config.tools_for_task(static_cast<int>(t));
      base_[t].assign(tools_[t].size(), 0.0);
    }
    for (const DemoItem& item : demos.items)
      for (const Step& s : item.trajectory.steps) {
        auto& tools = tools_.at(static_cast<std::size_t>(s.task));
        for (std::size_t j = 0; j < tools.size(); ++j)
          if (tools[j] == s.tool) base_[static_cast<std::size_t>(s.task)][j] += 1.0;
      }
    for (auto& row : base_) {
      double total = 0.0;
      for (double c : row) total += c;
      // An unseen task has no empirical preference; treat it as uniform.
      for (double& c : row) c = total > 0.0 ? c / total : 1.0 / static_cast<double>(row.size());
    }
  }

  /// Explicit base distribution, one row per task aligned with tools_for_task.
  ToolMixture(const EnvConfig& config, std::vector<std::vector<double>> base, double alpha)
      : alpha_(alpha), base_(std::move(base)) {
    tools_.resize(config.num_tasks());
    for (std::size_t t = 0; t < config.num_tasks(); ++t) tools_[t] = config.tools_for_task(static_cast<int>(t));
  }

  const std::vector<int>& tools(int task) const { return tools_.at(static_cast<std::size_t>(task)); }
  const std::vector<double>& base(int task) const { return base_.at(static_cast<std::size_t>(task)); }
  double alpha() const { return alpha_; }

  std::vector<double> probabilities(int task) const {
    const auto& b = base(task);
    std::vector<double> out(b.size());
    const double uniform = b.empty() ? 0.0 : 1.0 / static_cast<double>(b.size());
    for (std::size_t j = 0; j < b.size(); ++j) out[j] = (1.0 - alpha_) * b[j] + alpha_ * uniform;
    return out;
  }

  /// Two-stage draw: uniform with probability alpha, otherwise from P.
  int sample(int task, Rng& rng) const {
    if (task < 0 || task >= static_cast<int>(tools_.size()) || tools(task).empty())
      throw Error(ErrorCode::EmptyToolSet, "task " + std::to_string(task) + " has no registered tools");
    const auto& candidates = tools(task);
    if (rng.bernoulli(alpha_)) return candidates[rng.index(candidates.size())];
    return candidates[rng.categorical(base(task))];
  }

 private:
  double alpha_;
  std::vector<std::vector<int>> tools_;
  std::vector<std::vector<double>> base_;
};

/// Tool-level perturbation: every step's tool is redrawn from the mixture
/// built on the input set; task sequences are kept.
inline DemoSet perturb_tools(const DemoSet& demos, const EdpConfig& cfg, const EnvConfig& config) {
  cfg.validate();
  const ToolMixture mixture(config, demos, cfg.alpha_m);
  DemoSet out;
  out.items.reserve(demos.items.size());
  for (std::size_t i = 0; i < demos.items.size(); ++i) {
    const DemoItem& src = demos.items[i];
    Rng rng(derive_seed(cfg.seed, Stream::ToolResample, {i}));
    std::vector<Step> steps = src.trajectory.steps;
    bool changed = false;
    for (Step& s : steps) {
      const int tool = mixture.sample(s.task, rng);
      changed |= tool != s.tool;
      s.tool = tool;
    }
    if (!changed) {
      out.items.push_back(src);
      continue;
    }
    out.items.push_back(
        {replay(config, src.initial(), std::move(steps)), static_cast<std::uint8_t>(src.provenance | kToolPerturbed)});
  }
  return out;
}

/// Tool perturbation applied to the order-augmented set.
inline DemoSet build_sft_set(const DemoSet& demos, const EdpConfig& cfg, const EnvConfig& config) {
  return perturb_tools(perturb_order(demos, cfg, config), cfg, config);
}

// Summaries.

inline std::map<std::size_t, std::size_t> length_histogram(const DemoSet& demos) {
  std::map<std::size_t, std::size_t> hist;
  for (const auto& item : demos.items) ++hist[item.trajectory.length()];
  return hist;
}

inline std::vector<std::size_t> tool_counts(const DemoSet& demos, const EnvConfig& config) {
  std::vector<std::size_t> counts(config.num_tools(), 0);
  for (const auto& item : demos.items)
    for (const Step& s : item.trajectory.steps) ++counts.at(static_cast<std::size_t>(s.tool));
  return counts;
}

/// Shannon entropy (nats) of a count vector; zero for an empty one.
inline double entropy_of_counts(std::span<const double> counts) {
  double total = 0.0;
  for (double c : counts) total += c;
  if (total <= 0.0) return 0.0;
  double h = 0.0;
  for (double c : counts)
    if (c > 0.0) h -= (c / total) * std::log(c / total);
  return h;
}

/// Tool-selection entropy for every task that appears at least once; tasks
/// never used map to a negative sentinel in the per-task vector.
struct ToolEntropy {
  std::vector<double> per_task;
  double mean = 0.0;  // over observed tasks
};

inline ToolEntropy tool_entropy(const std::vector<std::vector<double>>& counts_by_task) {
  ToolEntropy out;
  int observed = 0;
  for (const auto& row : counts_by_task) {
    double total = 0.0;
    for (double c : row) total += c;
    if (total <= 0.0) {
      out.per_task.push_back(-1.0);
      continue;
    }
    const double h = entropy_of_counts(row);
    out.per_task.push_back(h);
    out.mean += h;
    ++observed;
  }
  if (observed > 0) out.mean /= observed;
  return out;
}

inline std::vector<std::vector<double>> counts_by_task(const EnvConfig& config,
                                                       std::span<const Trajectory* const> trajectories) {
  std::vector<std::vector<double>> counts(config.num_tasks());
  std::vector<int> slot(config.num_tools(), 0);
  for (std::size_t t = 0; t < config.num_tasks(); ++t) {
    const auto tools = config.tools_for_task(static_cast<int>(t));
    counts[t].assign(tools.size(), 0.0);
    for (std::size_t j = 0; j < tools.size(); ++j) slot[static_cast<std::size_t>(tools[j])] = static_cast<int>(j);
  }
  for (const Trajectory* traj : trajectories)
    for (const Step& s : traj->steps)
      counts[static_cast<std::size_t>(s.task)][static_cast<std::size_t>(slot[static_cast<std::size_t>(s.tool)])] += 1.0;
  return counts;
}

inline ToolEntropy demo_tool_entropy(const DemoSet& demos, const EnvConfig& config) {
  std::vector<const Trajectory*> ptrs;
  ptrs.reserve(demos.items.size());
  for (const auto& item : demos.items) ptrs.push_back(&item.trajectory);
  return tool_entropy(counts_by_task(config, ptrs));
}

}  // namespace toolrl
