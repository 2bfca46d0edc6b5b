#pragma once

// File formats. All are documented in docs/FORMATS.md; every schema carries a
// format name and version.
//
//   experiment config   JSON, hierarchical (env / demos / edp / sft / train / pool / eval)
//   demo set            JSON lines: header record, then one record per item
//   policy checkpoint   text: magic, env digest, theta, optional MAR state
//   step curve          CSV, one row per training step
//   MAR telemetry       CSV, one row per (step, metric)
//   experiment summary  JSON

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "toolrl/default_env.hpp"
#include "toolrl/demo.hpp"
#include "toolrl/digest.hpp"
#include "toolrl/env.hpp"
#include "toolrl/mar.hpp"
#include "toolrl/policy.hpp"
#include "toolrl/pool.hpp"
#include "toolrl/trainer.hpp"

namespace toolrl {

using Json = nlohmann::ordered_json;

inline constexpr int kConfigVersion = 1;
inline constexpr int kDemoVersion = 1;
inline constexpr int kCheckpointVersion = 1;
inline constexpr int kSummaryVersion = 1;

namespace detail {

inline Json vec_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline std::string name_of(const std::vector<std::string>& names, int i) {
  return i < static_cast<int>(names.size()) ? names[static_cast<std::size_t>(i)] : std::to_string(i);
}

inline int index_of(const std::vector<std::string>& names, const Json& key, int limit, const std::string& path) {
  int i = -1;
  if (key.is_number_integer()) {
    i = key.get<int>();
  } else if (key.is_string()) {
    const auto s = key.get<std::string>();
    for (std::size_t k = 0; k < names.size(); ++k)
      if (names[k] == s) i = static_cast<int>(k);
    if (i < 0) config_error(path, "unknown name '" + s + "'");
  } else {
    config_error(path, "expected a name or index");
  }
  if (i < 0 || i >= limit) config_error(path, "index out of range");
  return i;
}

/// Sparse encoding relative to a base (identity or zero).
inline Json sparse_matrix(const Matrix& m, bool identity_base, const std::vector<std::string>& rows,
                          const std::vector<std::string>& cols) {
  Json a = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double base = identity_base && r == c ? 1.0 : 0.0;
      if (m(r, c) != base)
        a.push_back(Json::array({name_of(rows, static_cast<int>(r)), name_of(cols, static_cast<int>(c)), m(r, c)}));
    }
  return a;
}

inline Json sparse_vector(const Vector& v, const std::vector<std::string>& names) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (v[i] != 0.0) a.push_back(Json::array({name_of(names, static_cast<int>(i)), v[i]}));
  return a;
}

inline Matrix read_sparse_matrix(const Json& j, int D, bool identity_base, const std::vector<std::string>& rows,
                                 const std::vector<std::string>& cols, const std::string& path) {
  Matrix m = identity_base ? Matrix(Matrix::Identity(D, D)) : Matrix(Matrix::Zero(D, D));
  if (j.is_null()) return m;
  if (!j.is_array()) config_error(path, "expected a list of [row, col, value]");
  for (std::size_t k = 0; k < j.size(); ++k) {
    const auto& e = j[k];
    const std::string p = path + "[" + std::to_string(k) + "]";
    if (!e.is_array() || e.size() != 3 || !e[2].is_number()) config_error(p, "expected [row, col, value]");
    m(index_of(rows, e[0], D, p), index_of(cols, e[1], D, p)) = e[2].get<double>();
  }
  return m;
}

inline Vector read_sparse_vector(const Json& j, int D, const std::vector<std::string>& names, const std::string& path) {
  Vector v = Vector::Zero(D);
  if (j.is_null()) return v;
  if (!j.is_array()) config_error(path, "expected a list of [index, value]");
  for (std::size_t k = 0; k < j.size(); ++k) {
    const auto& e = j[k];
    const std::string p = path + "[" + std::to_string(k) + "]";
    if (!e.is_array() || e.size() != 2 || !e[1].is_number()) config_error(p, "expected [index, value]");
    v[index_of(names, e[0], D, p)] = e[1].get<double>();
  }
  return v;
}

inline Vector read_dense_vector(const Json& j, int D, const std::string& path, double fill) {
  if (j.is_null()) return Vector::Constant(D, fill);
  if (!j.is_array() || static_cast<int>(j.size()) != D) config_error(path, "expected " + std::to_string(D) + " numbers");
  Vector v(D);
  for (int i = 0; i < D; ++i) {
    if (!j[static_cast<std::size_t>(i)].is_number()) config_error(path, "expected numbers");
    v[i] = j[static_cast<std::size_t>(i)].get<double>();
  }
  return v;
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    config_error(path + "." + key, e.what());
  }
}

inline std::string formula_name(MetricFormula f) {
  switch (f) {
    case MetricFormula::ExpL2: return "exp_l2";
    case MetricFormula::InvL1: return "inv_l1";
    case MetricFormula::OneMinusMax: return "one_minus_max";
    case MetricFormula::Perceptual: return "perceptual";
  }
  return "?";
}

inline MetricFormula parse_formula(const std::string& s, const std::string& path) {
  if (s == "exp_l2") return MetricFormula::ExpL2;
  if (s == "inv_l1") return MetricFormula::InvL1;
  if (s == "one_minus_max") return MetricFormula::OneMinusMax;
  if (s == "perceptual") return MetricFormula::Perceptual;
  config_error(path, "unknown formula '" + s + "'");
}

}  // namespace detail

inline Json env_to_json(const EnvConfig& env) {
  using namespace detail;
  Json j;
  j["num_degradations"] = env.num_degradations;
  j["degradation_names"] = env.degradation_names;
  j["appearance_names"] = env.appearance_names;
  j["max_horizon"] = env.max_horizon;
  j["clip_max"] = env.clip_max;
  j["init"] = {{"min_active", env.init.min_active},
               {"max_active", env.init.max_active},
               {"intensity", {env.init.intensity_lo, env.init.intensity_hi}}};
  Json tasks = Json::array();
  for (const auto& t : env.tasks)
    tasks.push_back({{"name", t.name}, {"target", name_of(env.degradation_names, t.target)}});
  j["tasks"] = tasks;
  std::vector<std::string> task_names;
  for (const auto& t : env.tasks) task_names.push_back(t.name);
  Json tools = Json::array();
  for (const auto& t : env.tools) {
    Json tj;
    tj["name"] = t.name;
    tj["task"] = name_of(task_names, t.task);
    tj["exec_cost_ms"] = t.exec_cost_ms;
    tj["A"] = sparse_matrix(t.A, true, env.degradation_names, env.degradation_names);
    tj["b"] = sparse_vector(t.b, env.degradation_names);
    tj["C"] = sparse_matrix(t.C, true, env.appearance_names, env.appearance_names);
    tj["e"] = sparse_vector(t.e, env.appearance_names);
    tools.push_back(tj);
  }
  j["tools"] = tools;
  Json metrics = Json::array();
  for (const auto& m : env.metrics) {
    Json mj;
    mj["name"] = m.name;
    mj["kind"] = m.kind == MetricKind::Fidelity ? "fidelity" : "perceptual";
    mj["formula"] = formula_name(m.formula);
    mj["d_weights"] = vec_json(m.d_weights);
    if (m.formula == MetricFormula::Perceptual) {
      mj["p_gain"] = vec_json(m.p_gain);
      mj["p_penalty"] = vec_json(m.p_penalty);
      mj["base"] = m.base;
      mj["gain"] = m.gain;
      mj["penalty"] = m.penalty;
    }
    metrics.push_back(mj);
  }
  j["metrics"] = metrics;
  return j;
}

inline EnvConfig env_from_json(const Json& j) {
  using namespace detail;
  if (!j.is_object()) config_error("env", "expected an object");
  EnvConfig env;
  const std::string P = "env";
  env.num_degradations = get_or<int>(j, "num_degradations", 6, P);
  const int D = env.num_degradations;
  if (D < 1) config_error("env.num_degradations", "must be positive");
  env.degradation_names = get_or<std::vector<std::string>>(j, "degradation_names", {}, P);
  env.appearance_names = get_or<std::vector<std::string>>(j, "appearance_names", {}, P);
  env.max_horizon = get_or<int>(j, "max_horizon", 8, P);
  env.clip_max = get_or<double>(j, "clip_max", 2.0, P);
  if (j.contains("init")) {
    const Json& ij = j["init"];
    env.init.min_active = get_or<int>(ij, "min_active", 1, "env.init");
    env.init.max_active = get_or<int>(ij, "max_active", 0, "env.init");
    const auto range = get_or<std::vector<double>>(ij, "intensity", {0.3, 1.5}, "env.init");
    if (range.size() != 2) config_error("env.init.intensity", "expected [lo, hi]");
    env.init.intensity_lo = range[0];
    env.init.intensity_hi = range[1];
  }
  std::vector<std::string> task_names;
  const Json tasks = j.value("tasks", Json::array());
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const std::string p = "env.tasks[" + std::to_string(t) + "]";
    TaskSpec spec;
    spec.name = get_or<std::string>(tasks[t], "name", "task" + std::to_string(t), p);
    if (!tasks[t].contains("target")) config_error(p + ".target", "missing");
    spec.target = index_of(env.degradation_names, tasks[t]["target"], D, p + ".target");
    task_names.push_back(spec.name);
    env.tasks.push_back(spec);
  }
  const Json tools = j.value("tools", Json::array());
  for (std::size_t i = 0; i < tools.size(); ++i) {
    const std::string p = "env.tools[" + std::to_string(i) + "]";
    const Json& tj = tools[i];
    ToolSpec t;
    t.name = get_or<std::string>(tj, "name", "tool" + std::to_string(i), p);
    if (!tj.contains("task")) config_error(p + ".task", "missing");
    t.task = index_of(task_names, tj["task"], static_cast<int>(task_names.size()), p + ".task");
    t.exec_cost_ms = get_or<double>(tj, "exec_cost_ms", 0.0, p);
    t.A = read_sparse_matrix(tj.value("A", Json()), D, true, env.degradation_names, env.degradation_names, p + ".A");
    t.b = read_sparse_vector(tj.value("b", Json()), D, env.degradation_names, p + ".b");
    t.C = read_sparse_matrix(tj.value("C", Json()), D, true, env.appearance_names, env.appearance_names, p + ".C");
    t.e = read_sparse_vector(tj.value("e", Json()), D, env.appearance_names, p + ".e");
    env.tools.push_back(std::move(t));
  }
  const Json metrics = j.value("metrics", Json::array());
  for (std::size_t k = 0; k < metrics.size(); ++k) {
    const std::string p = "env.metrics[" + std::to_string(k) + "]";
    const Json& mj = metrics[k];
    MetricDef m;
    m.name = get_or<std::string>(mj, "name", "metric" + std::to_string(k), p);
    const auto kind = get_or<std::string>(mj, "kind", "fidelity", p);
    if (kind != "fidelity" && kind != "perceptual") config_error(p + ".kind", "fidelity or perceptual");
    m.kind = kind == "fidelity" ? MetricKind::Fidelity : MetricKind::Perceptual;
    m.formula = parse_formula(get_or<std::string>(mj, "formula", "exp_l2", p), p + ".formula");
    m.d_weights = read_dense_vector(mj.value("d_weights", Json()), D, p + ".d_weights", 1.0);
    m.p_gain = read_dense_vector(mj.value("p_gain", Json()), D, p + ".p_gain", 0.0);
    m.p_penalty = read_dense_vector(mj.value("p_penalty", Json()), D, p + ".p_penalty", 0.0);
    m.base = get_or<double>(mj, "base", 0.0, p);
    m.gain = get_or<double>(mj, "gain", 0.0, p);
    m.penalty = get_or<double>(mj, "penalty", 0.0, p);
    env.metrics.push_back(std::move(m));
  }
  env.validate();
  return env;
}

inline std::string env_digest(const EnvConfig& env) { return hex_digest(env_to_json(env).dump()); }

// Experiment config.

/// Desk-scale defaults: the shipped environment and training sizes that keep
/// one ablation run well under two minutes on a single core.
inline ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;
  cfg.env = default_env_config();
  cfg.num_demos = 200;
  cfg.sft = {3.0, 5000};
  cfg.train.batch_size = 64;
  cfg.train.group_size = 8;
  cfg.train.max_parallel_rollouts = 128;
  cfg.train.workers = 4;
  cfg.train.steps = 40;
  cfg.train.lr = 0.5;
  cfg.eval = {256, 8};
  cfg.apply_seed(20260101);
  return cfg;
}

inline Json experiment_to_json(const ExperimentConfig& cfg) {
  Json j;
  j["format"] = "toolrl-config";
  j["version"] = kConfigVersion;
  j["seed"] = cfg.seed;
  j["env"] = env_to_json(cfg.env);
  j["demos"] = {{"count", cfg.num_demos}};
  j["edp"] = {{"alpha_t", cfg.edp.alpha_t}, {"alpha_m", cfg.edp.alpha_m}};
  j["sft"] = {{"lr", cfg.sft.lr}, {"epochs", cfg.sft.epochs}};
  j["train"] = {{"batch_size", cfg.train.batch_size},
                {"group_size", cfg.train.group_size},
                {"max_parallel_rollouts", cfg.train.max_parallel_rollouts},
                {"workers", cfg.train.workers},
                {"steps", cfg.train.steps},
                {"lr", cfg.train.lr},
                {"reward_mode", std::string(to_string(cfg.train.reward_mode))},
                {"mar_epsilon", cfg.train.mar.epsilon},
                {"mar_beta", cfg.train.mar.beta},
                {"mar_per_group", cfg.train.mar_per_group},
                {"invoke_timeout_ms", cfg.train.invoke_timeout.count()}};
  Json caps = Json::array();
  for (const auto& c : cfg.pool.capabilities) caps.push_back(c);
  j["pool"] = {{"num_resources", cfg.pool.num_resources},
               {"failure_rate", cfg.pool.failure_rate},
               {"latency_mean_us", cfg.pool.latency_mean_us},
               {"latency_jitter_us", cfg.pool.latency_jitter_us},
               {"tool_cost_scale", cfg.pool.tool_cost_scale},
               {"max_queue_depth", cfg.pool.max_queue_depth},
               {"timeout_ms", cfg.pool.timeout.count()},
               {"capabilities", caps}};
  j["eval"] = {{"num_states", cfg.eval.num_states}, {"group_size", cfg.eval.group_size}};
  return j;
}

inline ExperimentConfig experiment_from_json(const Json& j) {
  using detail::config_error;
  using detail::get_or;
  if (!j.is_object()) config_error("config", "expected an object");
  if (j.contains("format") && j["format"] != "toolrl-config") config_error("format", "not a toolrl config");
  if (get_or<int>(j, "version", kConfigVersion, "config") != kConfigVersion)
    config_error("version", "unsupported config version");
  ExperimentConfig cfg = default_experiment_config();
  if (j.contains("env")) cfg.env = env_from_json(j["env"]);
  if (j.contains("demos")) cfg.num_demos = get_or<std::size_t>(j["demos"], "count", cfg.num_demos, "demos");
  if (j.contains("edp")) {
    cfg.edp.alpha_t = get_or<double>(j["edp"], "alpha_t", cfg.edp.alpha_t, "edp");
    cfg.edp.alpha_m = get_or<double>(j["edp"], "alpha_m", cfg.edp.alpha_m, "edp");
  }
  if (j.contains("sft")) {
    cfg.sft.lr = get_or<double>(j["sft"], "lr", cfg.sft.lr, "sft");
    cfg.sft.epochs = get_or<int>(j["sft"], "epochs", cfg.sft.epochs, "sft");
  }
  if (j.contains("train")) {
    const Json& t = j["train"];
    auto& tc = cfg.train;
    tc.batch_size = get_or<int>(t, "batch_size", tc.batch_size, "train");
    tc.group_size = get_or<int>(t, "group_size", tc.group_size, "train");
    tc.max_parallel_rollouts = get_or<int>(t, "max_parallel_rollouts", tc.max_parallel_rollouts, "train");
    tc.workers = get_or<int>(t, "workers", tc.workers, "train");
    tc.steps = get_or<int>(t, "steps", tc.steps, "train");
    tc.lr = get_or<double>(t, "lr", tc.lr, "train");
    try {
      tc.reward_mode = parse_reward_mode(get_or<std::string>(t, "reward_mode", "mar", "train"));
    } catch (const Error& e) {
      config_error("train.reward_mode", e.what());
    }
    tc.mar.epsilon = get_or<double>(t, "mar_epsilon", tc.mar.epsilon, "train");
    tc.mar.beta = get_or<double>(t, "mar_beta", tc.mar.beta, "train");
    tc.mar_per_group = get_or<bool>(t, "mar_per_group", tc.mar_per_group, "train");
    tc.invoke_timeout = std::chrono::milliseconds(get_or<long>(t, "invoke_timeout_ms", tc.invoke_timeout.count(), "train"));
  }
  if (j.contains("pool")) {
    const Json& p = j["pool"];
    auto& pc = cfg.pool;
    pc.num_resources = get_or<int>(p, "num_resources", pc.num_resources, "pool");
    pc.failure_rate = get_or<double>(p, "failure_rate", pc.failure_rate, "pool");
    pc.latency_mean_us = get_or<double>(p, "latency_mean_us", pc.latency_mean_us, "pool");
    pc.latency_jitter_us = get_or<double>(p, "latency_jitter_us", pc.latency_jitter_us, "pool");
    pc.tool_cost_scale = get_or<double>(p, "tool_cost_scale", pc.tool_cost_scale, "pool");
    pc.max_queue_depth = get_or<std::size_t>(p, "max_queue_depth", pc.max_queue_depth, "pool");
    pc.timeout = std::chrono::milliseconds(get_or<long>(p, "timeout_ms", pc.timeout.count(), "pool"));
    pc.capabilities = get_or<std::vector<std::vector<int>>>(p, "capabilities", {}, "pool");
  }
  if (j.contains("eval")) {
    cfg.eval.num_states = get_or<int>(j["eval"], "num_states", cfg.eval.num_states, "eval");
    cfg.eval.group_size = get_or<int>(j["eval"], "group_size", cfg.eval.group_size, "eval");
  }
  cfg.apply_seed(get_or<Seed>(j, "seed", cfg.seed, "config"));
  cfg.validate();
  return cfg;
}

inline std::string config_text(const ExperimentConfig& cfg) { return experiment_to_json(cfg).dump(2) + "\n"; }

inline ExperimentConfig load_experiment_config(const std::string& path) {
  const std::string text = read_file(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::Parse, path + ": " + e.what());
  }
  return experiment_from_json(j);
}

// Demo sets.

inline std::string demos_to_jsonl(const DemoSet& demos) {
  std::ostringstream out;
  Json header = {{"format", "toolrl-demos"}, {"version", kDemoVersion}, {"count", demos.size()}};
  out << header.dump() << '\n';
  for (const DemoItem& item : demos.items) {
    Json steps = Json::array();
    for (const Step& s : item.trajectory.steps) steps.push_back(Json::array({s.task, s.tool}));
    Json rec = {{"d", detail::vec_json(item.initial().d)},
                {"p", detail::vec_json(item.initial().p)},
                {"steps", steps},
                {"provenance", provenance_name(item.provenance)}};
    out << rec.dump() << '\n';
  }
  return out.str();
}

/// Parse and replay every record against `env`.
inline DemoSet demos_from_jsonl(const std::string& text, const EnvConfig& env) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) -> void {
    throw Error(ErrorCode::Parse, "demo file line " + std::to_string(lineno) + ": " + msg);
  };
  DemoSet demos;
  std::size_t expected = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(e.what());
    }
    if (lineno == 1) {
      if (j.value("format", "") != "toolrl-demos") fail("missing toolrl-demos header");
      if (j.value("version", 0) != kDemoVersion) fail("unsupported version");
      expected = j.value("count", std::size_t{0});
      continue;
    }
    try {
      const auto d = j.at("d").get<std::vector<double>>();
      const auto p = j.at("p").get<std::vector<double>>();
      if (static_cast<int>(d.size()) != env.num_degradations || p.size() != d.size()) fail("vector length mismatch");
      EnvState init{Eigen::Map<const Vector>(d.data(), static_cast<Eigen::Index>(d.size())),
                    Eigen::Map<const Vector>(p.data(), static_cast<Eigen::Index>(p.size())), 0};
      std::vector<Step> steps;
      for (const auto& s : j.at("steps")) steps.push_back({s.at(0).get<int>(), s.at(1).get<int>()});
      demos.items.push_back({replay(env, init, std::move(steps)), parse_provenance(j.at("provenance").get<std::string>())});
    } catch (const nlohmann::json::exception& e) {
      fail(e.what());
    } catch (const Error& e) {
      fail(e.what());
    }
  }
  if (lineno == 0) throw Error(ErrorCode::Parse, "demo file is empty");
  if (demos.size() != expected)
    throw Error(ErrorCode::Parse, "header count " + std::to_string(expected) + " but " +
                                      std::to_string(demos.size()) + " records");
  return demos;
}

// Policy checkpoints.

inline std::string checkpoint_text(const PolicyParams& params, const EnvConfig& env, const MarState* mar = nullptr) {
  std::ostringstream out;
  out << "toolrl-policy " << kCheckpointVersion << '\n';
  out << "env " << env_digest(env) << '\n';
  out << "theta " << params.theta.rows() << ' ' << params.theta.cols() << '\n';
  for (Eigen::Index r = 0; r < params.theta.rows(); ++r) {
    for (Eigen::Index c = 0; c < params.theta.cols(); ++c) out << (c ? " " : "") << format_double(params.theta(r, c));
    out << '\n';
  }
  if (mar) {
    out << "mar " << mar->num_metrics() << ' ' << (mar->initialized ? 1 : 0) << ' ' << format_double(mar->epsilon)
        << ' ' << format_double(mar->beta) << '\n';
    for (const Vector* v : {&mar->ema, &mar->deviation, &mar->weights}) {
      for (Eigen::Index i = 0; i < v->size(); ++i) out << (i ? " " : "") << format_double((*v)[i]);
      out << '\n';
    }
  }
  return out.str();
}

struct Checkpoint {
  PolicyParams params;
  std::optional<MarState> mar;
};

inline Checkpoint checkpoint_from_text(const std::string& text, const EnvConfig& env) {
  std::istringstream in(text);
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::Parse, "checkpoint: " + msg); };
  std::string magic, tag, digest;
  int version = 0;
  if (!(in >> magic >> version) || magic != "toolrl-policy") fail("bad magic");
  if (version != kCheckpointVersion) fail("unsupported version " + std::to_string(version));
  if (!(in >> tag >> digest) || tag != "env") fail("missing env digest");
  if (digest != env_digest(env)) fail("trained against a different environment (" + digest + ")");
  Eigen::Index rows = 0, cols = 0;
  if (!(in >> tag >> rows >> cols) || tag != "theta") fail("missing theta");
  const PolicyParams expect = PolicyParams::zeros(env);
  if (rows != expect.theta.rows() || cols != expect.theta.cols()) fail("theta shape mismatch");
  Checkpoint ck{expect, std::nullopt};
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      if (!(in >> ck.params.theta(r, c))) fail("truncated theta");
  if (in >> tag) {
    if (tag != "mar") fail("unexpected section " + tag);
    int R = 0, init = 0;
    double eps = 0, beta = 0;
    if (!(in >> R >> init >> eps >> beta)) fail("bad mar header");
    MarState m = MarState::uniform(R, {eps, beta});
    m.initialized = init != 0;
    for (Vector* v : {&m.ema, &m.deviation, &m.weights})
      for (Eigen::Index i = 0; i < R; ++i)
        if (!(in >> (*v)[i])) fail("truncated mar state");
    ck.mar = std::move(m);
  }
  return ck;
}

// Reports.

inline std::string steps_csv(const std::vector<StepReport>& curve, const EnvConfig& env) {
  std::ostringstream out;
  out << "step,mean_length,surrogate_loss,grad_norm,distinct_fraction,order_fraction,tool_fraction,"
         "identical_fraction,tool_entropy";
  for (const char* prefix : {"reward_", "weight_"})
    for (const auto& m : env.metrics) out << ',' << prefix << m.name;
  out << '\n';
  for (const StepReport& r : curve) {
    out << r.step;
    for (double v : {r.mean_length, r.surrogate_loss, r.grad_norm, r.distinct_fraction, r.order_fraction,
                     r.tool_fraction, r.identical_fraction, r.tool_entropy})
      out << ',' << format_double(v);
    for (const Vector* v : {&r.batch_reward, &r.weights})
      for (Eigen::Index k = 0; k < v->size(); ++k) out << ',' << format_double((*v)[k]);
    out << '\n';
  }
  return out.str();
}

inline std::string mar_csv(const std::vector<StepReport>& curve, const EnvConfig& env) {
  std::ostringstream out;
  out << "step,metric,batch_reward,ema,deviation,weight\n";
  for (const StepReport& r : curve)
    for (std::size_t k = 0; k < env.metrics.size(); ++k) {
      const auto i = static_cast<Eigen::Index>(k);
      out << r.step << ',' << env.metrics[k].name << ',' << format_double(r.batch_reward[i]) << ','
          << format_double(r.ema[i]) << ',' << format_double(r.deviation[i]) << ',' << format_double(r.weights[i])
          << '\n';
    }
  return out.str();
}

inline Json diversity_json(const DiversityReport& d) {
  return {{"distinct_fraction", d.distinct_fraction},
          {"order_fraction", d.order_fraction},
          {"tool_fraction", d.tool_fraction},
          {"identical_fraction", d.identical_fraction},
          {"tool_entropy_mean", d.tool_entropy.mean},
          {"tool_entropy_per_task", d.tool_entropy.per_task}};
}

inline Json eval_json(const EvalReport& e, const EnvConfig& env) {
  Json metrics;
  for (std::size_t k = 0; k < env.metrics.size(); ++k)
    metrics[env.metrics[k].name] = e.mean_metrics[static_cast<Eigen::Index>(k)];
  return {{"metrics", metrics},
          {"mean_score", e.mean_score},
          {"worst_metric", e.worst_metric},
          {"worst_metric_name", env.metrics[static_cast<std::size_t>(e.worst_index)].name},
          {"mean_length", e.mean_length},
          {"diversity", diversity_json(e.diversity)}};
}

inline std::string params_digest(const PolicyParams& p) {
  std::ostringstream out;
  for (Eigen::Index i = 0; i < p.theta.size(); ++i) out << format_double(p.theta.data()[i]) << ' ';
  return hex_digest(out.str());
}

/// Digest of the settings that can change results. The worker count only
/// changes scheduling, so it is left out.
inline std::string config_digest(const ExperimentConfig& cfg) {
  Json j = experiment_to_json(cfg);
  j["train"].erase("workers");
  return hex_digest(j.dump());
}

/// Deterministic summary: excludes timing and scheduling-dependent counters.
inline Json experiment_summary(const ExperimentReport& rep, const ExperimentConfig& cfg) {
  Json j;
  j["format"] = "toolrl-experiment";
  j["version"] = kSummaryVersion;
  j["mode"] = std::string(to_string(rep.mode));
  j["seed"] = cfg.seed;
  j["config_digest"] = config_digest(cfg);
  j["plan"] = {{"edp", rep.plan.edp},
               {"alpha_t", rep.plan.alpha_t},
               {"alpha_m", rep.plan.alpha_m},
               {"sft", rep.plan.sft},
               {"rl", rep.plan.rl},
               {"reward_mode", std::string(to_string(rep.plan.reward))}};
  j["demos"] = {{"oracle", rep.num_demos}, {"sft_set", rep.sft_set_size}, {"sft_examples", rep.sft_examples}};
  j["sft_log_likelihood"] = rep.sft_log_likelihood;
  j["sft_eval"] = eval_json(rep.sft_eval, cfg.env);
  j["rl_steps"] = rep.curve.size();
  j["curve_digest"] = hex_digest(steps_csv(rep.curve, cfg.env));
  j["eval"] = eval_json(rep.eval, cfg.env);
  j["params_digest"] = params_digest(rep.params);
  j["mar"] = {{"ema", detail::vec_json(rep.mar.ema)}, {"weights", detail::vec_json(rep.mar.weights)}};
  return j;
}

inline Json pool_stats_json(const PoolStats& s) {
  Json res = Json::array();
  for (const auto& r : s.resources)
    res.push_back({{"id", r.id}, {"completed", r.completed}, {"failed", r.failed}, {"retried", r.retried},
                   {"busy", r.busy}});
  return {{"requests", s.requests},
          {"requests_completed", s.requests_completed},
          {"requests_retried", s.requests_retried},
          {"requests_exhausted", s.requests_exhausted},
          {"timeouts", s.timeouts},
          {"max_attempts_observed", s.max_attempts_observed},
          {"max_concurrency", s.max_concurrency},
          {"mutual_exclusion_violations", s.mutual_exclusion_violations},
          {"queue_depth", s.queue_depth},
          {"max_queue_depth_observed", s.max_queue_depth_observed},
          {"resources", res}};
}

}  // namespace toolrl
