#pragma once

// Linear-softmax policy over (task, tool) actions plus TERMINATE.
//
// Action index i < num_tools picks tool i (for the task it serves); index
// num_tools is TERMINATE. Features summarize (state, history):
//
//   [ d (D) | p (D) | step / horizon | task counts (T) | 1 ]
//
// The score-function gradient of log pi(a) is (onehot(a) - pi) phi^T, with
// rows of masked-out actions identically zero.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "toolrl/demo.hpp"
#include "toolrl/env.hpp"
#include "toolrl/rng.hpp"

namespace toolrl {

struct FeatureSpec {
  int num_degradations = 0;
  int num_tasks = 0;
  int max_horizon = 1;

  static FeatureSpec for_config(const EnvConfig& config) {
    return {config.num_degradations, static_cast<int>(config.num_tasks()), config.max_horizon};
  }
  int dim() const { return 2 * num_degradations + 1 + num_tasks + 1; }
};

/// Summary of the interaction history: how often each task has run.
struct History {
  std::vector<int> task_counts;

  static History empty(const EnvConfig& config) { return {std::vector<int>(config.num_tasks(), 0)}; }
  void record(int task) { ++task_counts.at(static_cast<std::size_t>(task)); }
  int total() const {
    int n = 0;
    for (int c : task_counts) n += c;
    return n;
  }
};

struct PolicyParams {
  Matrix theta;  // num_actions x feature_dim

  static PolicyParams zeros(const EnvConfig& config) {
    return {Matrix::Zero(static_cast<Eigen::Index>(config.num_tools() + 1), FeatureSpec::for_config(config).dim())};
  }
  bool finite() const { return theta.allFinite(); }
};

inline int num_actions(const EnvConfig& config) { return static_cast<int>(config.num_tools()) + 1; }
inline int terminate_index(const EnvConfig& config) { return static_cast<int>(config.num_tools()); }

inline int action_index(const EnvConfig& config, const Action& a) {
  return a.is_terminate() ? terminate_index(config) : a.tool;
}

inline Action action_at(const EnvConfig& config, int index) {
  if (index == terminate_index(config)) return Action::terminate();
  return {config.tools.at(static_cast<std::size_t>(index)).task, index};
}

inline Vector features(const EnvConfig& config, const EnvState& state, const History& history) {
  const FeatureSpec spec = FeatureSpec::for_config(config);
  const int D = spec.num_degradations;
  Vector phi(spec.dim());
  phi.segment(0, D) = state.d;
  phi.segment(D, D) = state.p;
  phi[2 * D] = static_cast<double>(state.step) / static_cast<double>(spec.max_horizon);
  for (int t = 0; t < spec.num_tasks; ++t) phi[2 * D + 1 + t] = history.task_counts[static_cast<std::size_t>(t)];
  phi[spec.dim() - 1] = 1.0;
  return phi;
}

/// Softmax of logits, or all mass on TERMINATE (the last entry) when it is
/// the only valid action.
inline Vector masked_softmax(const Vector& logits, bool only_last) {
  Vector out = Vector::Zero(logits.size());
  if (only_last) {
    out[logits.size() - 1] = 1.0;
    return out;
  }
  const double m = logits.maxCoeff();
  out = (logits.array() - m).exp();
  out /= out.sum();
  return out;
}

/// Full-length probability vector indexed by action index.
inline Vector action_distribution(const PolicyParams& params, const EnvConfig& config, const EnvState& state,
                                  const History& history) {
  const Vector phi = features(config, state, history);
  return masked_softmax(params.theta * phi, state.step >= config.max_horizon);
}

inline bool action_valid(const EnvConfig& config, const EnvState& state, int index) {
  if (index == terminate_index(config)) return true;
  return index >= 0 && index < terminate_index(config) && state.step < config.max_horizon;
}

/// Gradient of log pi(action | state, history) with respect to theta.
inline Matrix log_prob_grad(const PolicyParams& params, const EnvConfig& config, const EnvState& state,
                            const History& history, int action) {
  if (!action_valid(config, state, action))
    throw Error(ErrorCode::InvalidAction, "action " + std::to_string(action) + " not valid in state");
  const Vector phi = features(config, state, history);
  Vector coeff = -masked_softmax(params.theta * phi, state.step >= config.max_horizon);
  coeff[action] += 1.0;
  return coeff * phi.transpose();
}

inline double log_prob(const PolicyParams& params, const EnvConfig& config, const EnvState& state,
                       const History& history, int action) {
  if (!action_valid(config, state, action)) return -std::numeric_limits<double>::infinity();
  if (state.step >= config.max_horizon) return 0.0;
  const Vector logits = params.theta * features(config, state, history);
  const double m = logits.maxCoeff();
  return logits[action] - m - std::log((logits.array() - m).exp().sum());
}

/// Histories along a trajectory, one per decision point (length + 1).
inline std::vector<History> histories(const EnvConfig& config, const Trajectory& traj) {
  std::vector<History> out;
  out.reserve(traj.steps.size() + 1);
  History h = History::empty(config);
  out.push_back(h);
  for (const Step& s : traj.steps) {
    h.record(s.task);
    out.push_back(h);
  }
  return out;
}

/// Sum over decisions of grad log pi, including the final TERMINATE when the
/// trajectory stopped before the horizon.
inline Matrix trajectory_score(const PolicyParams& params, const EnvConfig& config, const Trajectory& traj) {
  Matrix g = Matrix::Zero(params.theta.rows(), params.theta.cols());
  const auto hist = histories(config, traj);
  for (std::size_t k = 0; k < traj.steps.size(); ++k)
    g += log_prob_grad(params, config, traj.states[k], hist[k], traj.steps[k].tool);
  if (traj.final_state().step < config.max_horizon)
    g += log_prob_grad(params, config, traj.final_state(), hist.back(), terminate_index(config));
  return g;
}

/// Direct tool execution; the pooled runner in the trainer has the same shape.
struct DirectRunner {
  const EnvConfig* config;
  EnvState operator()(const EnvState& state, int tool, std::size_t /*step*/) const {
    return apply_tool(*config, state, tool);
  }
};

/// Sample actions until TERMINATE or the horizon. `runner(state, tool, k)`
/// executes the k-th tool call.
template <typename Runner>
Trajectory rollout(const PolicyParams& params, const EnvConfig& config, const EnvState& initial, Seed seed,
                   Runner&& runner) {
  Rng rng(seed);
  Trajectory traj;
  traj.states.push_back(initial);
  History history = History::empty(config);
  const int stop = terminate_index(config);
  while (traj.states.back().step < config.max_horizon) {
    const Vector probs = action_distribution(params, config, traj.states.back(), history);
    const int a = static_cast<int>(rng.categorical(std::span<const double>(probs.data(), probs.size())));
    if (a == stop) break;
    const int task = config.tools[static_cast<std::size_t>(a)].task;
    EnvState next = runner(traj.states.back(), a, traj.steps.size());
    traj.steps.push_back({task, a});
    traj.states.push_back(std::move(next));
    history.record(task);
  }
  traj.final_metrics = measure(traj.states.back(), config);
  return traj;
}

inline Trajectory rollout(const PolicyParams& params, const EnvConfig& config, const EnvState& initial, Seed seed) {
  return rollout(params, config, initial, seed, DirectRunner{&config});
}

// Behavior cloning.

struct SftConfig {
  double lr = 3.0;
  int epochs = 5000;
};

struct SftResult {
  PolicyParams params;
  std::vector<double> log_likelihood;  // mean over examples, before each update and after the last
  std::size_t num_examples = 0;

  double final_log_likelihood() const { return log_likelihood.back(); }
};

/// (features, action) pairs for every free decision in the demos, including
/// the implied TERMINATE after each trajectory that ends before the horizon.
struct BcDataset {
  Matrix phi;  // N x F
  std::vector<int> action;
};

inline BcDataset bc_dataset(const DemoSet& demos, const EnvConfig& config) {
  std::vector<Vector> rows;
  BcDataset ds;
  for (const DemoItem& item : demos.items) {
    const Trajectory& traj = item.trajectory;
    const auto hist = histories(config, traj);
    for (std::size_t k = 0; k < traj.steps.size(); ++k) {
      rows.push_back(features(config, traj.states[k], hist[k]));
      ds.action.push_back(traj.steps[k].tool);
    }
    if (traj.final_state().step < config.max_horizon) {
      rows.push_back(features(config, traj.final_state(), hist.back()));
      ds.action.push_back(terminate_index(config));
    }
  }
  const int F = FeatureSpec::for_config(config).dim();
  ds.phi.resize(static_cast<Eigen::Index>(rows.size()), F);
  for (std::size_t i = 0; i < rows.size(); ++i) ds.phi.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return ds;
}

/// Full-batch gradient ascent on the mean log-likelihood of demo actions.
inline SftResult sft_update(const PolicyParams& init, const DemoSet& demos, const EnvConfig& config,
                            const SftConfig& cfg) {
  if (demos.empty()) throw Error(ErrorCode::InvalidConfig, "sft: demo set is empty");
  const BcDataset ds = bc_dataset(demos, config);
  const Eigen::Index N = ds.phi.rows();
  const Eigen::Index A = init.theta.rows();

  SftResult result{init, {}, static_cast<std::size_t>(N)};
  if (N == 0) {
    result.log_likelihood.assign(static_cast<std::size_t>(cfg.epochs) + 1, 0.0);
    return result;
  }
  Matrix target = Matrix::Zero(N, A);
  for (Eigen::Index i = 0; i < N; ++i) target(i, ds.action[static_cast<std::size_t>(i)]) = 1.0;

  auto evaluate = [&](const Matrix& theta, Matrix& probs) {
    probs = ds.phi * theta.transpose();
    double ll = 0.0;
    for (Eigen::Index i = 0; i < N; ++i) {
      auto row = probs.row(i);
      const double m = row.maxCoeff();
      row = (row.array() - m).exp();
      const double z = row.sum();
      row /= z;
      ll += std::log(row(ds.action[static_cast<std::size_t>(i)]));
    }
    return ll / static_cast<double>(N);
  };

  Matrix probs;
  Matrix& theta = result.params.theta;
  result.log_likelihood.reserve(static_cast<std::size_t>(cfg.epochs) + 1);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    result.log_likelihood.push_back(evaluate(theta, probs));
    if (cfg.lr == 0.0) continue;
    const Matrix grad = (target - probs).transpose() * ds.phi / static_cast<double>(N);
    theta += cfg.lr * grad;
  }
  result.log_likelihood.push_back(evaluate(theta, probs));
  return result;
}

}  // namespace toolrl
