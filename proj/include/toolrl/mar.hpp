#pragma once

// Multi-dimensional adaptive reward.
//
// Per metric k, with batch reward r_k and its running average m_k:
//
//   deviation  w^_k = 1 - clip((r_k - m_k) / m_k, -eps, eps)
//   average    m_k <- (1 - beta) r_k + beta m_k
//   weights    w = softmax(w^)
//
// Advantages are standardized per metric within each rollout group and then
// combined with w. A metric that falls below its average gains weight.

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>

#include "toolrl/env.hpp"
#include "toolrl/error.hpp"

namespace toolrl {

inline constexpr double kDegenerateStd = 1e-8;
inline constexpr double kEmaFloor = 1e-8;

struct MarConfig {
  double epsilon = 0.2;
  double beta = 0.9;

  void validate() const {
    if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidConfig, "mar.epsilon: must be positive");
    if (!(beta >= 0.0 && beta < 1.0)) throw Error(ErrorCode::InvalidConfig, "mar.beta: must be in [0,1)");
  }
};

struct MarState {
  Vector ema;        // positive
  Vector deviation;  // last w^, for telemetry
  Vector weights;    // probability vector
  double epsilon = 0.2;
  double beta = 0.9;
  bool initialized = false;  // ema seeded from the first observed batch

  static MarState uniform(int num_metrics, const MarConfig& cfg = {}) {
    cfg.validate();
    MarState s;
    s.ema = Vector::Ones(num_metrics);
    s.deviation = Vector::Ones(num_metrics);
    s.weights = Vector::Constant(num_metrics, 1.0 / num_metrics);
    s.epsilon = cfg.epsilon;
    s.beta = cfg.beta;
    return s;
  }

  int num_metrics() const { return static_cast<int>(weights.size()); }
};

inline Vector deviation_score(const Vector& batch_mean, const MarState& state) {
  const Vector rel = (batch_mean - state.ema).cwiseQuotient(state.ema);
  return (1.0 - rel.array().max(-state.epsilon).min(state.epsilon)).matrix();
}

inline MarState update_ema(const Vector& batch_mean, const MarState& state) {
  MarState next = state;
  next.ema = ((1.0 - state.beta) * batch_mean + state.beta * state.ema).cwiseMax(kEmaFloor);
  return next;
}

inline Vector softmax(const Vector& x) {
  const Vector z = (x.array() - x.maxCoeff()).exp();
  return z / z.sum();
}

inline MarState normalize_weights(const Vector& deviation, const MarState& state) {
  MarState next = state;
  next.deviation = deviation;
  next.weights = softmax(deviation);
  return next;
}

/// One training step's MAR update: score the batch against the pre-update
/// average, renormalize weights, then fold the batch into the average.
inline MarState observe_batch(const Vector& batch_mean, const MarState& state) {
  MarState cur = state;
  if (!cur.initialized) {
    cur.ema = batch_mean.cwiseMax(kEmaFloor);
    cur.initialized = true;
  }
  cur = normalize_weights(deviation_score(batch_mean, cur), cur);
  return update_ema(batch_mean, cur);
}

/// Population standardization; a column with std below the guard maps to 0.
inline Vector standardize(const Vector& x) {
  const double mean = x.mean();
  const double var = (x.array() - mean).square().mean();
  const double sd = std::sqrt(var);
  if (sd < kDegenerateStd) return Vector::Zero(x.size());
  return (x.array() - mean) / sd;
}

/// group: g x R rewards for one sample's rollouts.
inline Matrix decoupled_advantages(const Matrix& group) {
  Matrix out(group.rows(), group.cols());
  for (Eigen::Index k = 0; k < group.cols(); ++k) out.col(k) = standardize(group.col(k));
  return out;
}

inline Vector aggregate_advantages(const Matrix& per_metric, const Vector& weights) { return per_metric * weights; }

inline Vector aggregate_advantages(const Matrix& per_metric, const MarState& state) {
  return aggregate_advantages(per_metric, state.weights);
}

enum class RewardMode { Vanilla, NoDecouple, NoWeights, Mar };

inline std::string_view to_string(RewardMode m) {
  switch (m) {
    case RewardMode::Vanilla: return "vanilla";
    case RewardMode::NoDecouple: return "no_decouple";
    case RewardMode::NoWeights: return "no_weights";
    case RewardMode::Mar: return "mar";
  }
  return "?";
}

inline RewardMode parse_reward_mode(std::string_view s) {
  if (s == "vanilla") return RewardMode::Vanilla;
  if (s == "no_decouple") return RewardMode::NoDecouple;
  if (s == "no_weights") return RewardMode::NoWeights;
  if (s == "mar") return RewardMode::Mar;
  throw Error(ErrorCode::UnknownMode, "reward mode '" + std::string(s) + "'");
}

/// Per-rollout scalar advantage for one group under the given reward mode.
inline Vector reward_advantages(const Matrix& group, RewardMode mode, const MarState& state) {
  if (group.rows() < 2) throw Error(ErrorCode::InvalidConfig, "reward group needs g >= 2");
  const auto R = group.cols();
  switch (mode) {
    case RewardMode::Vanilla: return standardize(group.rowwise().sum());
    case RewardMode::NoDecouple: return standardize(group * Vector::Constant(R, 1.0 / static_cast<double>(R)));
    case RewardMode::NoWeights:
      return aggregate_advantages(decoupled_advantages(group), Vector::Constant(R, 1.0 / static_cast<double>(R)));
    case RewardMode::Mar: return aggregate_advantages(decoupled_advantages(group), state);
  }
  throw Error(ErrorCode::UnknownMode, "reward mode");
}

}  // namespace toolrl
