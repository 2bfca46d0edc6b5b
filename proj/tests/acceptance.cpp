// Acceptance run: one PASS/FAIL line per criterion, exit 0 iff all pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "toolrl/toolrl.hpp"

using namespace toolrl;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  std::vector<std::string> failures;
  std::string detail;
  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double x, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << std::fixed << x;
  return s.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// 1. MAR arithmetic

void mar_arithmetic(Criterion& c) {
  Rng rng(derive_seed(1, Stream::Property));
  int cases = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const int R = 1 + static_cast<int>(rng.index(6));
    const double eps = 0.01 + 0.5 * rng.uniform();
    MarState s = MarState::uniform(R, {eps, 0.9});
    for (int k = 0; k < R; ++k) s.ema[k] = 0.05 + rng.uniform();
    s.initialized = true;
    Vector batch(R);
    for (int k = 0; k < R; ++k) batch[k] = 3.0 * rng.uniform();
    const Vector dev = deviation_score(batch, s);
    for (int k = 0; k < R; ++k) {
      const double rel = (batch[k] - s.ema[k]) / s.ema[k];
      const double expect = 1.0 - std::clamp(rel, -eps, eps);
      c.expect(dev[k] >= 1.0 - eps - 1e-15 && dev[k] <= 1.0 + eps + 1e-15, "deviation outside clip band");
      c.expect(std::abs(dev[k] - expect) < 1e-12, "deviation value");
    }
    const MarState same = update_ema(s.ema, s);
    c.expect((same.ema - s.ema).cwiseAbs().maxCoeff() < 1e-12, "EMA fixed point");
    const Vector w = softmax(dev);
    c.expect(std::abs(w.sum() - 1.0) < 1e-9 && (w.array() > 0).all(), "softmax simplex");

    const int g = 2 + static_cast<int>(rng.index(15));
    Matrix group(g, R);
    for (Eigen::Index i = 0; i < group.size(); ++i) group.data()[i] = rng.uniform();
    if (trial % 10 == 0) group.col(0).setConstant(0.37);  // degenerate column
    const Matrix adv = decoupled_advantages(group);
    for (int k = 0; k < R; ++k) {
      const Vector col = adv.col(k);
      const double mean = col.mean();
      const double sd = std::sqrt((col.array() - mean).square().mean());
      c.expect(std::abs(mean) < 1e-9, "advantage column mean");
      if (trial % 10 == 0 && k == 0)
        c.expect(col.cwiseAbs().maxCoeff() == 0.0, "degenerate group guard");
      else
        c.expect(std::abs(sd - 1.0) < 1e-9, "advantage column std");
    }
    Matrix scaled = group;
    for (int k = 0; k < R; ++k) scaled.col(k) *= 0.01 + 100.0 * rng.uniform();
    c.expect((decoupled_advantages(scaled) - adv).cwiseAbs().maxCoeff() < 1e-9, "scale invariance");
    ++cases;
  }
  c.detail = std::to_string(cases) + " random cases";
}

// 2. EDP distributions

std::vector<Step> sorted_steps(const Trajectory& t) {
  auto s = t.steps;
  std::sort(s.begin(), s.end());
  return s;
}

void edp_distributions(Criterion& c) {
  const EnvConfig env = default_env_config();
  const DemoSet demos = generate_oracle_demos(env, 200, 20260101);
  // empirical tool frequencies, counted here rather than read from the mixture
  std::vector<std::vector<double>> freq(env.num_tasks());
  for (std::size_t t = 0; t < env.num_tasks(); ++t) freq[t].assign(env.num_tools(), 0.0);
  for (const auto& item : demos.items)
    for (const Step& s : item.trajectory.steps) freq[static_cast<std::size_t>(s.task)][static_cast<std::size_t>(s.tool)] += 1;
  double worst = 0.0;
  for (double alpha : {0.0, 0.4, 1.0}) {
    const ToolMixture mix(env, demos, alpha);
    for (int t = 0; t < static_cast<int>(env.num_tasks()); ++t) {
      const std::vector<int> tools = env.tools_for_task(t);
      double total = 0.0;
      for (int m : tools) total += freq[static_cast<std::size_t>(t)][static_cast<std::size_t>(m)];
      Rng rng(derive_seed(2, Stream::Property, {static_cast<std::uint64_t>(alpha * 10), static_cast<std::uint64_t>(t)}));
      std::vector<double> hits(env.num_tools(), 0.0);
      const int draws = 50000;
      for (int i = 0; i < draws; ++i) hits[static_cast<std::size_t>(mix.sample(t, rng))] += 1;
      for (int m : tools) {
        const double p_hat = total > 0 ? freq[static_cast<std::size_t>(t)][static_cast<std::size_t>(m)] / total
                                       : 1.0 / static_cast<double>(tools.size());
        const double expect = (1 - alpha) * p_hat + alpha / static_cast<double>(tools.size());
        const double err = std::abs(hits[static_cast<std::size_t>(m)] / draws - expect);
        worst = std::max(worst, err);
        c.expect(err <= 0.01, "mixture frequency off for tool " + env.tools[static_cast<std::size_t>(m)].name);
      }
    }
  }

  Rng rng(derive_seed(3, Stream::Property));
  for (int trial = 0; trial < 1000; ++trial) {
    DemoSet in;
    const std::size_t n = 1 + rng.index(6);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<Step> steps;
      const std::size_t len = rng.index(7);
      for (std::size_t k = 0; k < len; ++k) {
        const int tool = static_cast<int>(rng.index(env.num_tools()));
        steps.push_back({env.tools[static_cast<std::size_t>(tool)].task, tool});
      }
      in.items.push_back({replay(env, init_state(env, rng.index(1u << 30)), std::move(steps)), kOracle});
    }
    const EdpConfig cfg{rng.uniform(), rng.uniform(), rng.index(1u << 30)};
    const DemoSet ordered = perturb_order(in, cfg, env);
    bool ok = ordered.size() >= n && ordered.size() <= 2 * n;
    for (std::size_t i = 0; ok && i < n; ++i)
      ok = ordered.items[i].trajectory.steps == in.items[i].trajectory.steps &&
           ordered.items[i].initial() == in.items[i].initial();
    std::size_t src = 0;
    for (std::size_t i = n; ok && i < ordered.size(); ++i) {
      const auto& copy = ordered.items[i];
      while (src < n && !(in.items[src].initial() == copy.initial() &&
                          sorted_steps(in.items[src].trajectory) == sorted_steps(copy.trajectory)))
        ++src;
      ok = src < n && replays_exactly(env, copy.trajectory);
      ++src;
    }
    c.expect(ok, "order perturbation union/permutation property, trial " + std::to_string(trial));
    const DemoSet tooled = perturb_tools(ordered, cfg, env);
    bool tasks_kept = tooled.size() == ordered.size();
    for (std::size_t i = 0; tasks_kept && i < tooled.size(); ++i) {
      const auto& a = tooled.items[i].trajectory.steps;
      const auto& b = ordered.items[i].trajectory.steps;
      tasks_kept = a.size() == b.size() && replays_exactly(env, tooled.items[i].trajectory);
      for (std::size_t k = 0; tasks_kept && k < a.size(); ++k) tasks_kept = a[k].task == b[k].task;
    }
    c.expect(tasks_kept, "tool perturbation kept task sequence, trial " + std::to_string(trial));
  }
  c.detail = "max |freq - law| " + num(worst) + ", 1000 random demo sets";
}

// 3 and 4 share the experiment runs

struct SeedRuns {
  std::vector<ExperimentReport> by_seed;
};

SeedRuns run_seeds(Ablation mode) {
  SeedRuns out;
  const ExperimentConfig base = default_experiment_config();
  for (Seed k = 0; k < 5; ++k) {
    ExperimentConfig cfg = base;
    cfg.apply_seed(base.seed + k);
    out.by_seed.push_back(run_experiment(cfg, mode, 1));
  }
  return out;
}

double mean_of(const SeedRuns& r, const std::function<double(const ExperimentReport&)>& f) {
  double s = 0.0;
  for (const auto& rep : r.by_seed) s += f(rep);
  return s / static_cast<double>(r.by_seed.size());
}

// Measured on the RL rollout groups (8 rollouts per training state), averaged
// over steps and seeds. The held-out evaluation groups are reported alongside.
void diversity_claim(Criterion& c) {
  const EnvConfig env = default_env_config();
  const SeedRuns full = run_seeds(Ablation::Full);
  const SeedRuns no_edp = run_seeds(Ablation::NoEdp);
  auto over_steps = [](const std::function<double(const StepReport&)>& f) {
    return [f](const ExperimentReport& r) {
      double s = 0.0;
      for (const StepReport& step : r.curve) s += f(step);
      return r.curve.empty() ? 0.0 : s / static_cast<double>(r.curve.size());
    };
  };
  const auto distinct = over_steps([](const StepReport& s) { return s.distinct_fraction; });
  const auto identical = over_steps([](const StepReport& s) { return s.identical_fraction; });
  const double d_full = mean_of(full, distinct), d_base = mean_of(no_edp, distinct);
  const double ident = mean_of(no_edp, identical);
  c.expect(d_full > d_base, "distinct fraction not higher with perturbation");
  c.expect(ident > 0.5, "no_edp groups are not majority identical");
  int higher = 0;
  for (std::size_t t = 0; t < env.num_tasks(); ++t) {
    const auto h = over_steps([t](const StepReport& s) { return std::max(0.0, s.tool_entropy_per_task[t]); });
    const double hf = mean_of(full, h), hb = mean_of(no_edp, h);
    if (hf > hb) ++higher;
    c.expect(hf > hb, "tool entropy not higher for task " + env.tasks[t].name + " (" + num(hf) + " vs " + num(hb) + ")");
  }
  const auto mean_h = over_steps([](const StepReport& s) { return s.tool_entropy; });

  int eval_higher = 0;
  for (std::size_t t = 0; t < env.num_tasks(); ++t) {
    auto h = [t](const ExperimentReport& r) { return std::max(0.0, r.eval.diversity.tool_entropy.per_task[t]); };
    if (mean_of(full, h) > mean_of(no_edp, h)) ++eval_higher;
  }
  auto eval_distinct = [](const ExperimentReport& r) { return r.eval.diversity.distinct_fraction; };

  c.detail = "train groups: distinct " + num(d_full) + " vs " + num(d_base) + ", entropy " +
             num(mean_of(full, mean_h)) + " vs " + num(mean_of(no_edp, mean_h)) + " (" + std::to_string(higher) +
             "/" + std::to_string(env.num_tasks()) + " tasks higher), no_edp identical " + num(ident) +
             "; held-out: distinct " + num(mean_of(full, eval_distinct)) + " vs " +
             num(mean_of(no_edp, eval_distinct)) + ", entropy higher on " + std::to_string(eval_higher) + "/" +
             std::to_string(env.num_tasks()) + " tasks";
}

void reward_hacking(Criterion& c) {
  auto worst = [](const SeedRuns& r) {
    std::vector<double> v;
    for (const auto& rep : r.by_seed) v.push_back(rep.eval.worst_metric);
    return median(v);
  };
  const double full = worst(run_seeds(Ablation::Full));
  const double no_mar = worst(run_seeds(Ablation::NoMar));
  const double no_decouple = worst(run_seeds(Ablation::NoDecouple));
  const double no_weights = worst(run_seeds(Ablation::NoWeights));
  const double vanilla = worst(run_seeds(Ablation::Vanilla));
  c.expect(full > no_mar, "full not strictly above vanilla reward");
  c.expect(full > vanilla, "full not strictly above vanilla pipeline");
  c.expect(full >= no_decouple, "full below no_decouple");
  c.expect(full >= no_weights, "full below no_weights");
  c.detail = "median worst metric full " + num(full) + ", no_mar " + num(no_mar) + ", no_decouple " +
             num(no_decouple) + ", no_weights " + num(no_weights) + ", vanilla " + num(vanilla);
}

// 5. policy gradients

void policy_gradient(Criterion& c) {
  const EnvConfig env = default_env_config();
  Rng rng(derive_seed(5, Stream::Property, {1}));
  const double h = 1e-5;
  double worst_rel = 0.0, worst_score = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    EnvState s = init_state(env, rng.index(1u << 30));
    History hist = History::empty(env);
    const std::size_t k = rng.index(static_cast<std::size_t>(env.max_horizon));
    for (std::size_t i = 0; i < k; ++i) {
      const int tool = static_cast<int>(rng.index(env.num_tools()));
      s = apply_tool(env, s, tool);
      hist.record(env.tools[static_cast<std::size_t>(tool)].task);
    }
    PolicyParams p = PolicyParams::zeros(env);
    for (Eigen::Index i = 0; i < p.theta.size(); ++i) p.theta.data()[i] = 0.6 * rng.uniform() - 0.3;
    const int a = static_cast<int>(rng.index(static_cast<std::size_t>(num_actions(env))));
    const Matrix g = log_prob_grad(p, env, s, hist, a);
    Matrix fd(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const double keep = p.theta.data()[i];
      p.theta.data()[i] = keep + h;
      const double up = log_prob(p, env, s, hist, a);
      p.theta.data()[i] = keep - h;
      const double down = log_prob(p, env, s, hist, a);
      p.theta.data()[i] = keep;
      fd.data()[i] = (up - down) / (2 * h);
    }
    const double rel = (g - fd).norm() / std::max(fd.norm(), 1e-12);
    worst_rel = std::max(worst_rel, rel);
    c.expect(rel < 1e-4, "finite difference mismatch, case " + std::to_string(trial));

    const Vector pi = action_distribution(p, env, s, hist);
    Matrix score = Matrix::Zero(g.rows(), g.cols());
    for (int b = 0; b < num_actions(env); ++b)
      if (action_valid(env, s, b)) score += pi[b] * log_prob_grad(p, env, s, hist, b);
    worst_score = std::max(worst_score, score.cwiseAbs().maxCoeff());
    c.expect(score.cwiseAbs().maxCoeff() < 1e-9, "score expectation nonzero, case " + std::to_string(trial));
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "max rel err %.2e, max |E score| %.2e", worst_rel, worst_score);
  c.detail = buf;
}

// 6. pool protocol

void pool_protocol(Criterion& c) {
  const EnvConfig env = default_env_config();
  PoolBenchConfig cfg;
  cfg.requests = 64 * 8;
  cfg.concurrency = 64 * 8;
  cfg.pool.num_resources = 8;
  cfg.pool.failure_rate = 0.1;
  cfg.pool.latency_mean_us = 200;
  cfg.pool.latency_jitter_us = 100;
  cfg.pool.seed = 20260101;
  const PoolBenchResult r = run_pool_bench(env, cfg);
  const PoolStats& s = r.stats;
  c.expect(s.mutual_exclusion_violations == 0, "mutual exclusion violated");
  c.expect(s.max_attempts_observed <= 3, "more than 3 attempts");
  c.expect(s.requests == 512 && r.settled(), "not every request settled");
  c.expect(r.other_errors == 0, "unexpected errors");
  c.expect(s.all_free(), "resources still busy after settle");
  c.expect(r.mismatches == 0, "pooled result differs from direct execution");
  c.expect(r.bad_traces == 0, "exhausted request without 3 recorded attempts");
  c.expect(s.requests_retried == r.expected_retried && s.requests_exhausted == r.expected_exhausted,
           "retry counters disagree with the fault schedule");
  c.expect(within_3sigma(s.requests_retried, 512, 0.1), "retry count outside 3 sigma");
  c.expect(within_3sigma(s.requests_exhausted, 512, 0.001), "exhaustion count outside 3 sigma");
  c.detail = "retried " + std::to_string(s.requests_retried) + ", exhausted " + std::to_string(s.requests_exhausted) +
             ", max concurrency " + std::to_string(s.max_concurrency);
}

// 7. end-to-end determinism through the CLI

std::string ablate_digest(int workers, const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path out = dir / "stdout.txt";
  const std::string cmd = "TOOLRL_LOG=quiet " + std::string(TOOLRL_CLI) + " ablate --mode full --config " +
                          std::string(TOOLRL_SOURCE_DIR) + "/configs/default.json --workers " +
                          std::to_string(workers) + " --out " + (dir / "run").string() + " >" + out.string();
  const int status = std::system(cmd.c_str());
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) return "exit " + std::to_string(status);
  std::istringstream in(read_file(out.string()));
  std::string line;
  const std::string key = "report digest ";
  while (std::getline(in, line))
    if (auto pos = line.find(key); pos != std::string::npos) return line.substr(pos + key.size());
  return "no digest";
}

void determinism(Criterion& c) {
  const fs::path base = fs::temp_directory_path() / "toolrl_acceptance";
  std::vector<std::string> digests;
  for (int workers : {1, 1, 4, 4}) digests.push_back(ablate_digest(workers, base / std::to_string(digests.size())));
  for (const auto& d : digests) c.expect(d == digests.front() && d.size() == 16, "digest mismatch: " + d);
  fs::remove_all(base);
  c.detail = "digest " + digests.front() + " (workers 1,1,4,4)";
}

}  // namespace

int main() {
  struct Entry {
    const char* name;
    double budget_s;
    void (*run)(Criterion&);
  };
  const Entry entries[] = {
      {"1 mar-arithmetic", 1.0, mar_arithmetic},       {"2 edp-distributions", 30.0, edp_distributions},
      {"3 diversity", 600.0, diversity_claim},         {"4 reward-hacking", 900.0, reward_hacking},
      {"5 policy-gradient", 5.0, policy_gradient},     {"6 pool-protocol", 60.0, pool_protocol},
      {"7 determinism", 600.0, determinism},
  };
  bool all = true;
  for (const Entry& e : entries) {
    Criterion c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      e.run(c);
    } catch (const std::exception& ex) {
      c.failures.push_back(std::string("threw: ") + ex.what());
    }
    const double s = seconds_since(t0);
    if (s >= e.budget_s) c.failures.push_back("took " + num(s, 2) + " s, budget " + num(e.budget_s, 0) + " s");
    const bool pass = c.failures.empty();
    all &= pass;
    std::cout << (pass ? "PASS " : "FAIL ") << e.name << " [" << num(s, 2) << " s] " << c.detail;
    if (!pass) {
      std::cout << " :: " << c.failures.front();
      if (c.failures.size() > 1) std::cout << " (+" << c.failures.size() - 1 << " more)";
    }
    std::cout << std::endl;
  }
  return all ? 0 : 1;
}
