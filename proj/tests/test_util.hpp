#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "toolrl/toolrl.hpp"

namespace toolrl::testing {

// Compare against tests/golden/<name>. TOOLRL_UPDATE_GOLDEN=1 rewrites it.
inline void expect_golden(const std::string& name, const std::string& actual) {
  const std::string path = std::string(TOOLRL_GOLDEN_DIR) + "/" + name;
  if (std::getenv("TOOLRL_UPDATE_GOLDEN")) {
    write_file(path, actual);
    return;
  }
  ASSERT_TRUE(std::filesystem::exists(path)) << "missing golden " << path;
  EXPECT_EQ(read_file(path), actual) << "golden mismatch: " << name;
}

inline MetricDef fidelity_metric(int D, MetricFormula f) {
  MetricDef m;
  m.name = "fid";
  m.kind = MetricKind::Fidelity;
  m.formula = f;
  m.d_weights = Vector::Ones(D);
  m.p_gain = Vector::Zero(D);
  m.p_penalty = Vector::Zero(D);
  return m;
}

inline MetricDef perceptual_metric(int D) {
  MetricDef m;
  m.name = "perc";
  m.kind = MetricKind::Perceptual;
  m.formula = MetricFormula::Perceptual;
  m.d_weights = Vector::Constant(D, 0.5);
  m.p_gain = Vector::Ones(D);
  m.p_penalty = Vector::Zero(D);
  m.base = 0.6;
  m.gain = 0.3;
  return m;
}

// `tasks` tasks over D = tasks components, `per_task` tools each. Tool j of
// task t scales its target by 0.1 * j (tool 0 annihilates the target).
inline EnvConfig small_env(int tasks, int per_task, int horizon = 8) {
  EnvConfig cfg;
  const int D = tasks;
  cfg.num_degradations = D;
  cfg.max_horizon = horizon;
  cfg.clip_max = 2.0;
  cfg.init = {1, 0, 0.5, 1.5};
  for (int t = 0; t < tasks; ++t) cfg.tasks.push_back({"task" + std::to_string(t), t});
  for (int t = 0; t < tasks; ++t)
    for (int j = 0; j < per_task; ++j)
      cfg.tools.push_back(make_tool("t" + std::to_string(t) + "_" + std::to_string(j), t, D,
                                    {{t, t, 0.1 * j}}, {}, {}, {{t, 0.1 * j}}, 1.0));
  cfg.metrics = {fidelity_metric(D, MetricFormula::ExpL2), perceptual_metric(D)};
  cfg.validate();
  return cfg;
}

}  // namespace toolrl::testing
