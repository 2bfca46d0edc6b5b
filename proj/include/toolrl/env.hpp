#pragma once

// Synthetic restoration environment.
//
// An "image" is a residual-degradation vector d (zero means clean) plus an
// appearance vector p that tools can inflate (hallucinated texture,
// over-sharpening, contrast). Tools act linearly with clamping:
//
//   d' = clamp(A d + b, 0, clip_max),   p' = C p + e
//
// Off-diagonal entries of A couple degradations, so the order in which tools
// run changes the final state. Fidelity metrics read d only; perceptual
// metrics also read p, which is what lets a policy trade one family against
// the other.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "toolrl/error.hpp"
#include "toolrl/rng.hpp"

namespace toolrl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using MetricVector = Eigen::VectorXd;

struct TaskSpec {
  std::string name;
  int target = 0;  // degradation component this task restores
};

struct ToolSpec {
  std::string name;
  int task = 0;
  Matrix A;  // degradation transfer
  Vector b;  // residual floor
  Matrix C;  // appearance transfer
  Vector e;  // appearance increment
  double exec_cost_ms = 0.0;
};

enum class MetricKind { Fidelity, Perceptual };

enum class MetricFormula {
  ExpL2,        // exp(-||w.d||_2)
  InvL1,        // 1 / (1 + ||w.d||_1)
  OneMinusMax,  // 1 - min(1, max_i w_i d_i)
  Perceptual,   // exp(-a.d) * (base + gain (1 - exp(-u.p+)) - penalty (1 - exp(-v.p+)))
};

struct MetricDef {
  std::string name;
  MetricKind kind = MetricKind::Fidelity;
  MetricFormula formula = MetricFormula::ExpL2;
  Vector d_weights;  // per-component scale (fidelity) or decay rates (perceptual)
  Vector p_gain;     // u
  Vector p_penalty;  // v
  double base = 0.0;
  double gain = 0.0;
  double penalty = 0.0;
};

struct InitSpec {
  int min_active = 1;
  int max_active = 0;  // 0 means num_degradations
  double intensity_lo = 0.3;
  double intensity_hi = 1.5;
};

struct EnvConfig {
  int num_degradations = 6;
  std::vector<std::string> degradation_names;
  std::vector<std::string> appearance_names;
  std::vector<TaskSpec> tasks;
  std::vector<ToolSpec> tools;
  std::vector<MetricDef> metrics;
  int max_horizon = 8;
  double clip_max = 2.0;
  InitSpec init;

  std::size_t num_tools() const { return tools.size(); }
  std::size_t num_tasks() const { return tasks.size(); }
  std::size_t num_metrics() const { return metrics.size(); }
  int max_active() const { return init.max_active > 0 ? init.max_active : num_degradations; }

  std::vector<int> tools_for_task(int task) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < tools.size(); ++i)
      if (tools[i].task == task) out.push_back(static_cast<int>(i));
    return out;
  }

  void validate() const;
};

struct EnvState {
  Vector d;
  Vector p;
  int step = 0;

  friend bool operator==(const EnvState& a, const EnvState& b) {
    return a.step == b.step && a.d.size() == b.d.size() && a.p.size() == b.p.size() &&
           (a.d.array() == b.d.array()).all() && (a.p.array() == b.p.array()).all();
  }
};

/// One decision. Restoration actions name a (task, tool) pair; TERMINATE has
/// both fields at -1.
struct Action {
  int task = -1;
  int tool = -1;

  static constexpr Action terminate() { return {}; }
  constexpr bool is_terminate() const { return tool < 0; }
  friend constexpr bool operator==(const Action&, const Action&) = default;
};

namespace detail {

[[noreturn]] inline void config_error(const std::string& path, const std::string& msg) {
  throw Error(ErrorCode::InvalidConfig, path + ": " + msg);
}

inline bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

}  // namespace detail

inline void EnvConfig::validate() const {
  using detail::config_error;
  const int D = num_degradations;
  if (D < 1) config_error("env.num_degradations", "must be positive");
  if (!degradation_names.empty() && static_cast<int>(degradation_names.size()) != D)
    config_error("env.degradation_names", "length must equal num_degradations");
  if (!appearance_names.empty() && static_cast<int>(appearance_names.size()) != D)
    config_error("env.appearance_names", "length must equal num_degradations");
  if (max_horizon < 1) config_error("env.max_horizon", "must be positive");
  if (!(clip_max > 0.0) || !std::isfinite(clip_max)) config_error("env.clip_max", "must be positive");
  if (tasks.empty()) config_error("env.tasks", "at least one task required");
  if (init.min_active < 1 || max_active() > D || init.min_active > max_active())
    config_error("env.init", "need 1 <= min_active <= max_active <= num_degradations");
  if (!(init.intensity_lo > 0.0) || init.intensity_hi < init.intensity_lo || init.intensity_hi > clip_max)
    config_error("env.init", "need 0 < intensity_lo <= intensity_hi <= clip_max");

  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const std::string path = "env.tasks[" + std::to_string(t) + "]";
    if (tasks[t].target < 0 || tasks[t].target >= D) config_error(path + ".target", "out of range");
    if (tools_for_task(static_cast<int>(t)).empty()) config_error(path, "task has no tools");
  }
  for (std::size_t i = 0; i < tools.size(); ++i) {
    const ToolSpec& tool = tools[i];
    const std::string path = "env.tools[" + std::to_string(i) + "]";
    if (tool.task < 0 || tool.task >= static_cast<int>(tasks.size())) config_error(path + ".task", "unknown task");
    if (tool.A.rows() != D || tool.A.cols() != D) config_error(path + ".A", "must be D x D");
    if (tool.C.rows() != D || tool.C.cols() != D) config_error(path + ".C", "must be D x D");
    if (tool.b.size() != D) config_error(path + ".b", "must have length D");
    if (tool.e.size() != D) config_error(path + ".e", "must have length D");
    if (!detail::all_finite(tool.A) || !detail::all_finite(tool.C) || !tool.b.allFinite() || !tool.e.allFinite())
      config_error(path, "non-finite coefficients");
    if (tool.exec_cost_ms < 0.0) config_error(path + ".exec_cost_ms", "must be non-negative");
    // The targeted component must not grow anywhere on the box [0, clip_max]^D:
    // max over the box of (A d + b - d)_t is a sum of positive parts.
    const int t = tasks[static_cast<std::size_t>(tool.task)].target;
    double worst = tool.b[t];
    for (int j = 0; j < D; ++j) worst += std::max(0.0, tool.A(t, j) - (j == t ? 1.0 : 0.0)) * clip_max;
    if (worst > 0.0) config_error(path, "tool can increase its own target degradation");
  }

  if (metrics.size() < 2) config_error("env.metrics", "need at least two metrics");
  bool has_fidelity = false;
  bool has_perceptual = false;
  for (std::size_t k = 0; k < metrics.size(); ++k) {
    const MetricDef& m = metrics[k];
    const std::string path = "env.metrics[" + std::to_string(k) + "]";
    has_fidelity |= m.kind == MetricKind::Fidelity;
    has_perceptual |= m.kind == MetricKind::Perceptual;
    if (m.d_weights.size() != D || (m.d_weights.array() < 0.0).any())
      config_error(path + ".d_weights", "need D non-negative weights");
    if (m.formula == MetricFormula::Perceptual) {
      if (m.p_gain.size() != D || m.p_penalty.size() != D) config_error(path, "p_gain/p_penalty need length D");
      if ((m.p_gain.array() < 0.0).any() || (m.p_penalty.array() < 0.0).any())
        config_error(path, "p weights must be non-negative");
      if (m.base < 0.0 || m.gain < 0.0 || m.penalty < 0.0 || m.base + m.gain > 1.0)
        config_error(path, "need base, gain, penalty >= 0 and base + gain <= 1");
    }
  }
  if (!has_fidelity || !has_perceptual) config_error("env.metrics", "need both fidelity and perceptual metrics");
}

/// Episode reset: between min_active and max_active components are drawn
/// without replacement and given intensities uniform in [lo, hi].
inline EnvState init_state(const EnvConfig& config, Seed seed) {
  Rng rng(derive_seed(seed, Stream::InitState));
  const int D = config.num_degradations;
  const int span = config.max_active() - config.init.min_active + 1;
  const int active = config.init.min_active + static_cast<int>(rng.index(static_cast<std::size_t>(span)));
  std::vector<int> order(static_cast<std::size_t>(D));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span<int>(order));

  EnvState s{Vector::Zero(D), Vector::Zero(D), 0};
  for (int i = 0; i < active; ++i) {
    s.d[order[static_cast<std::size_t>(i)]] = rng.uniform(config.init.intensity_lo, config.init.intensity_hi);
  }
  return s;
}

inline EnvState clean_reference(const EnvConfig& config) {
  const int D = config.num_degradations;
  return {Vector::Zero(D), Vector::Zero(D), 0};
}

inline EnvState apply_tool(const EnvConfig& config, const EnvState& state, const ToolSpec& tool) {
  if (state.step >= config.max_horizon)
    throw Error(ErrorCode::HorizonExceeded, "step " + std::to_string(state.step) + " at horizon");
  EnvState next;
  next.d = (tool.A * state.d + tool.b).cwiseMax(0.0).cwiseMin(config.clip_max);
  next.p = tool.C * state.p + tool.e;
  next.step = state.step + 1;
  return next;
}

inline EnvState apply_tool(const EnvConfig& config, const EnvState& state, int tool_index) {
  if (tool_index < 0 || tool_index >= static_cast<int>(config.tools.size()))
    throw Error(ErrorCode::InvalidAction, "unknown tool " + std::to_string(tool_index));
  return apply_tool(config, state, config.tools[static_cast<std::size_t>(tool_index)]);
}

inline double measure_one(const MetricDef& m, const EnvState& s) {
  const Vector wd = m.d_weights.cwiseProduct(s.d);
  double v = 0.0;
  switch (m.formula) {
    case MetricFormula::ExpL2: v = std::exp(-wd.norm()); break;
    case MetricFormula::InvL1: v = 1.0 / (1.0 + wd.lpNorm<1>()); break;
    case MetricFormula::OneMinusMax: v = 1.0 - std::min(1.0, wd.size() ? wd.maxCoeff() : 0.0); break;
    case MetricFormula::Perceptual: {
      const Vector pp = s.p.cwiseMax(0.0);
      const double boost = 1.0 - std::exp(-m.p_gain.dot(pp));
      const double harm = 1.0 - std::exp(-m.p_penalty.dot(pp));
      v = std::exp(-wd.sum()) * (m.base + m.gain * boost - m.penalty * harm);
      break;
    }
  }
  return std::clamp(v, 0.0, 1.0);
}

inline MetricVector measure(const EnvState& state, const EnvConfig& config) {
  MetricVector out(static_cast<Eigen::Index>(config.metrics.size()));
  for (std::size_t k = 0; k < config.metrics.size(); ++k)
    out[static_cast<Eigen::Index>(k)] = measure_one(config.metrics[k], state);
  return out;
}

/// Restoration pairs in tool order, then TERMINATE. At the horizon only
/// TERMINATE remains.
inline std::vector<Action> valid_actions(const EnvState& state, const EnvConfig& config) {
  std::vector<Action> out;
  if (state.step < config.max_horizon) {
    out.reserve(config.tools.size() + 1);
    for (std::size_t i = 0; i < config.tools.size(); ++i)
      out.push_back({config.tools[i].task, static_cast<int>(i)});
  }
  out.push_back(Action::terminate());
  return out;
}

}  // namespace toolrl
