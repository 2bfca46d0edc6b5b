// toolrl: demo generation, perturbation, SFT, RL, evaluation, ablations and
// the pool stress bench behind one binary.
//
// Exit codes: 0 ok, 1 runtime/config error, 2 usage error, 3 invariant check failed.
// TOOLRL_LOG=quiet|info|debug controls stderr chatter.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "toolrl/toolrl.hpp"

namespace fs = std::filesystem;
using namespace toolrl;

namespace {

enum class Level { Quiet, Info, Debug };

Level log_level() {
  const char* v = std::getenv("TOOLRL_LOG");
  if (!v) return Level::Info;
  const std::string s(v);
  if (s == "quiet" || s == "0") return Level::Quiet;
  if (s == "debug" || s == "2") return Level::Debug;
  return Level::Info;
}

void log(Level at, const std::string& msg) {
  if (log_level() >= at) std::cerr << "[toolrl] " << msg << '\n';
}

std::string fixed(double x, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, x);
  return buf;
}

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flags shared by most subcommands. Unset optionals keep the config value.
struct Options {
  std::string config;
  std::optional<Seed> seed;
  std::string out = "out";
  std::optional<int> workers;
  std::optional<double> alpha_t, alpha_m, lr, failure_rate;
  std::optional<std::string> reward_mode;
  std::optional<int> group_size, batch, steps, pool_size;
};

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "experiment config (JSON); defaults to the built-in config");
  sub->add_option("--seed", o.seed, "master seed");
  sub->add_option("--out", o.out, "output directory")->capture_default_str();
  sub->add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
}

void add_edp_flags(CLI::App* sub, Options& o) {
  sub->add_option("--alpha-t", o.alpha_t, "order perturbation probability")->check(CLI::Range(0.0, 1.0));
  sub->add_option("--alpha-m", o.alpha_m, "uniform tool mixture weight")->check(CLI::Range(0.0, 1.0));
}

void add_train_flags(CLI::App* sub, Options& o) {
  sub->add_option("--reward-mode", o.reward_mode, "vanilla | no_decouple | no_weights | mar");
  sub->add_option("--group-size", o.group_size, "rollouts per sample")->check(CLI::PositiveNumber);
  sub->add_option("--batch", o.batch, "samples per step")->check(CLI::PositiveNumber);
  sub->add_option("--steps", o.steps, "RL steps")->check(CLI::NonNegativeNumber);
  sub->add_option("--lr", o.lr, "RL learning rate");
  sub->add_option("--pool-size", o.pool_size, "pool resources")->check(CLI::PositiveNumber);
  sub->add_option("--failure-rate", o.failure_rate, "transient fault probability");
}

ExperimentConfig load_config(const Options& o) {
  ExperimentConfig cfg = o.config.empty() ? default_experiment_config() : load_experiment_config(o.config);
  if (o.seed) cfg.apply_seed(*o.seed);
  if (o.workers) cfg.train.workers = *o.workers;
  if (o.alpha_t) cfg.edp.alpha_t = *o.alpha_t;
  if (o.alpha_m) cfg.edp.alpha_m = *o.alpha_m;
  if (o.reward_mode) cfg.train.reward_mode = parse_reward_mode(*o.reward_mode);
  if (o.group_size) cfg.train.group_size = *o.group_size;
  if (o.batch) cfg.train.batch_size = *o.batch;
  if (o.steps) cfg.train.steps = *o.steps;
  if (o.lr) cfg.train.lr = *o.lr;
  if (o.pool_size) cfg.pool.num_resources = *o.pool_size;
  if (o.failure_rate) cfg.pool.failure_rate = *o.failure_rate;
  cfg.validate();
  return cfg;
}

fs::path out_dir(const Options& o) {
  fs::path dir(o.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

void write_out(const fs::path& path, std::string_view text) {
  write_file(path.string(), text);
  log(Level::Debug, "wrote " + path.string());
}

// Invariant checks collected per command; any failure means exit 3.
struct Checks {
  std::vector<std::string> failed;
  void expect(bool ok, const std::string& what) {
    if (!ok) failed.push_back(what);
  }
  int finish() const {
    for (const auto& f : failed) std::cerr << "invariant violated: " << f << '\n';
    return failed.empty() ? 0 : 3;
  }
};

void check_demos(Checks& c, const DemoSet& demos, const EnvConfig& env) {
  std::size_t bad = 0;
  for (const auto& item : demos.items)
    if (!replays_exactly(env, item.trajectory)) ++bad;
  c.expect(bad == 0, std::to_string(bad) + " demo trajectories do not replay");
}

Json demo_summary(const DemoSet& demos, const EnvConfig& env) {
  Json hist = Json::object();
  for (auto [len, n] : length_histogram(demos)) hist[std::to_string(len)] = n;
  Json tools = Json::object();
  const auto counts = tool_counts(demos, env);
  for (std::size_t i = 0; i < counts.size(); ++i) tools[env.tools[i].name] = counts[i];
  Json prov = Json::object();
  for (const auto& item : demos.items) {
    const std::string name = provenance_name(item.provenance);
    prov[name] = prov.value(name, 0) + 1;
  }
  const ToolEntropy h = demo_tool_entropy(demos, env);
  return {{"count", demos.size()},
          {"length_histogram", hist},
          {"tool_counts", tools},
          {"provenance", prov},
          {"tool_entropy_mean", h.mean},
          {"tool_entropy_per_task", h.per_task}};
}

void print_demo_summary(const Json& s, const EnvConfig& env) {
  std::cout << "records: " << s["count"].get<std::size_t>() << '\n';
  std::cout << "length histogram:";
  for (auto& [len, n] : s["length_histogram"].items()) std::cout << ' ' << len << ':' << n.get<std::size_t>();
  std::cout << "\ntool frequencies:\n";
  for (auto& [name, n] : s["tool_counts"].items()) std::cout << "  " << name << ' ' << n.get<std::size_t>() << '\n';
  std::cout << "tool entropy per task (nats):";
  const auto per = s["tool_entropy_per_task"].get<std::vector<double>>();
  for (std::size_t t = 0; t < per.size(); ++t)
    std::cout << ' ' << env.tasks[t].name << '=' << (per[t] < 0 ? std::string("-") : fixed(per[t]));
  std::cout << '\n';
}

DemoSet read_demos(const std::string& path, const EnvConfig& env) { return demos_from_jsonl(read_file(path), env); }

PolicyParams load_policy(const std::optional<std::string>& path, const EnvConfig& env, std::optional<MarState>* mar) {
  if (!path) return PolicyParams::zeros(env);
  Checkpoint ck = checkpoint_from_text(read_file(*path), env);
  if (mar) *mar = ck.mar;
  return ck.params;
}

void print_eval(const EvalReport& e, const EnvConfig& env) {
  for (std::size_t k = 0; k < env.metrics.size(); ++k)
    std::cout << "  " << env.metrics[k].name << ' ' << fixed(e.mean_metrics[static_cast<Eigen::Index>(k)]) << '\n';
  std::cout << "mean score " << fixed(e.mean_score) << ", worst metric "
            << env.metrics[static_cast<std::size_t>(e.worst_index)].name << ' ' << fixed(e.worst_metric)
            << ", mean length " << fixed(e.mean_length, 2) << '\n';
}

void print_diversity(const DiversityReport& d, const EnvConfig& env) {
  std::cout << "groups " << d.groups.size() << '\n'
            << "  distinct   " << fixed(d.distinct_fraction) << '\n'
            << "  order      " << fixed(d.order_fraction) << '\n'
            << "  tool       " << fixed(d.tool_fraction) << '\n'
            << "  identical  " << fixed(d.identical_fraction) << '\n'
            << "tool entropy per task (nats):";
  for (std::size_t t = 0; t < d.tool_entropy.per_task.size(); ++t) {
    const double h = d.tool_entropy.per_task[t];
    std::cout << ' ' << env.tasks[t].name << '=' << (h < 0 ? std::string("-") : fixed(h));
  }
  std::cout << "\n  mean " << fixed(d.tool_entropy.mean) << '\n';
}

// Subcommands.

int cmd_dump_config(const Options& o) {
  std::cout << config_text(load_config(o));
  return 0;
}

int cmd_gen_demos(const Options& o, std::optional<std::size_t> n) {
  if (n && *n == 0) throw UsageError("--n must be at least 1");
  ExperimentConfig cfg = load_config(o);
  const std::size_t count = n ? *n : cfg.num_demos;
  log(Level::Info, "generating " + std::to_string(count) + " oracle demos, seed " + std::to_string(cfg.seed));
  const DemoSet demos = generate_oracle_demos(cfg.env, count, cfg.seed);
  Checks c;
  check_demos(c, demos, cfg.env);
  c.expect(demos.size() == count, "record count");

  const fs::path dir = out_dir(o);
  const std::string text = demos_to_jsonl(demos);
  write_out(dir / "demos.jsonl", text);
  Json summary = demo_summary(demos, cfg.env);
  summary["digest"] = hex_digest(text);
  write_out(dir / "demos_summary.json", summary.dump(2) + "\n");
  print_demo_summary(summary, cfg.env);
  std::cout << "digest " << summary["digest"].get<std::string>() << '\n';
  return c.finish();
}

int cmd_edp(const Options& o, const std::string& in) {
  ExperimentConfig cfg = load_config(o);
  const DemoSet before = read_demos(in, cfg.env);
  const DemoSet after = build_sft_set(before, cfg.edp, cfg.env);
  Checks c;
  check_demos(c, after, cfg.env);
  c.expect(after.size() >= before.size(), "union is smaller than its input");

  const fs::path dir = out_dir(o);
  const std::string text = demos_to_jsonl(after);
  write_out(dir / "sft_set.jsonl", text);
  std::size_t order_copies = 0;
  for (const auto& item : after.items)
    if (item.provenance & kOrderPerturbed) ++order_copies;
  Json summary = {{"alpha_t", cfg.edp.alpha_t},
                  {"alpha_m", cfg.edp.alpha_m},
                  {"seed", cfg.edp.seed},
                  {"order_perturbed", order_copies},
                  {"before", demo_summary(before, cfg.env)},
                  {"after", demo_summary(after, cfg.env)},
                  {"digest", hex_digest(text)}};
  write_out(dir / "edp_summary.json", summary.dump(2) + "\n");

  std::cout << "records " << before.size() << " -> " << after.size() << " (" << order_copies
            << " order-perturbed copies)\n";
  std::cout << "tool entropy per task (nats), before -> after:\n";
  const auto hb = summary["before"]["tool_entropy_per_task"].get<std::vector<double>>();
  const auto ha = summary["after"]["tool_entropy_per_task"].get<std::vector<double>>();
  for (std::size_t t = 0; t < hb.size(); ++t)
    std::cout << "  " << cfg.env.tasks[t].name << ' ' << (hb[t] < 0 ? std::string("-") : fixed(hb[t])) << " -> "
              << (ha[t] < 0 ? std::string("-") : fixed(ha[t])) << '\n';
  return c.finish();
}

int cmd_sft(const Options& o, const std::optional<std::string>& demos_path, bool no_edp) {
  ExperimentConfig cfg = load_config(o);
  DemoSet demos;
  if (demos_path) {
    demos = read_demos(*demos_path, cfg.env);
  } else {
    demos = generate_oracle_demos(cfg.env, cfg.num_demos, cfg.seed);
    if (!no_edp) demos = build_sft_set(demos, cfg.edp, cfg.env);
  }
  log(Level::Info, "behavior cloning on " + std::to_string(demos.size()) + " demos, " +
                       std::to_string(cfg.sft.epochs) + " epochs");
  const SftResult r = sft_update(PolicyParams::zeros(cfg.env), demos, cfg.env, cfg.sft);
  Checks c;
  c.expect(r.params.finite(), "non-finite parameters");

  const fs::path dir = out_dir(o);
  write_out(dir / "policy.ckpt", checkpoint_text(r.params, cfg.env));
  std::string curve = "epoch,log_likelihood\n";
  for (std::size_t e = 0; e < r.log_likelihood.size(); ++e)
    curve += std::to_string(e) + "," + format_double(r.log_likelihood[e]) + "\n";
  write_out(dir / "sft_curve.csv", curve);
  Json summary = {{"demos", demos.size()},
                  {"examples", r.num_examples},
                  {"epochs", cfg.sft.epochs},
                  {"lr", cfg.sft.lr},
                  {"initial_log_likelihood", r.log_likelihood.front()},
                  {"final_log_likelihood", r.final_log_likelihood()},
                  {"params_digest", params_digest(r.params)}};
  write_out(dir / "sft_summary.json", summary.dump(2) + "\n");
  std::cout << "examples " << r.num_examples << ", mean log-likelihood " << fixed(r.log_likelihood.front())
            << " -> " << fixed(r.final_log_likelihood()) << '\n';
  return c.finish();
}

int cmd_rl(const Options& o, const std::optional<std::string>& init) {
  ExperimentConfig cfg = load_config(o);
  std::optional<MarState> loaded;
  PolicyParams params = load_policy(init, cfg.env, &loaded);
  MarState mar = loaded ? *loaded : MarState::uniform(static_cast<int>(cfg.env.num_metrics()), cfg.train.mar);
  Checks c;
  std::vector<StepReport> curve;
  PoolStats pool_stats;
  {
    ModelCallPool pool(cfg.env, cfg.pool);
    for (int step = 0; step < cfg.train.steps; ++step) {
      TrainStepResult r = train_step(params, mar, cfg.train, cfg.env, pool, step);
      params = std::move(r.params);
      mar = std::move(r.mar);
      c.expect(r.report.max_in_flight <= cfg.train.max_parallel_rollouts,
               "step " + std::to_string(step) + " exceeded max_parallel_rollouts");
      log(Level::Debug, "step " + std::to_string(step) + " length " + fixed(r.report.mean_length, 2) + " distinct " +
                            fixed(r.report.distinct_fraction));
      curve.push_back(std::move(r.report));
    }
    pool_stats = pool.stats();
  }
  c.expect(params.finite(), "non-finite parameters");
  c.expect(pool_stats.mutual_exclusion_violations == 0, "pool mutual exclusion");
  c.expect(pool_stats.max_attempts_observed <= ModelCallPool::kMaxAttempts, "attempt bound");

  const fs::path dir = out_dir(o);
  write_out(dir / "policy.ckpt", checkpoint_text(params, cfg.env, &mar));
  write_out(dir / "steps.csv", steps_csv(curve, cfg.env));
  write_out(dir / "mar.csv", mar_csv(curve, cfg.env));
  write_out(dir / "pool_stats.json", pool_stats_json(pool_stats).dump(2) + "\n");
  std::cout << "steps " << curve.size() << ", reward mode " << to_string(cfg.train.reward_mode) << '\n';
  if (!curve.empty()) {
    const StepReport& last = curve.back();
    std::cout << "last step: length " << fixed(last.mean_length, 2) << ", distinct " << fixed(last.distinct_fraction)
              << ", identical " << fixed(last.identical_fraction) << '\n';
    for (std::size_t k = 0; k < cfg.env.metrics.size(); ++k) {
      const auto i = static_cast<Eigen::Index>(k);
      std::cout << "  " << cfg.env.metrics[k].name << " reward " << fixed(last.batch_reward[i]) << " weight "
                << fixed(last.weights[i]) << '\n';
    }
  }
  std::cout << "mutual exclusion violations: " << pool_stats.mutual_exclusion_violations << '\n';
  return c.finish();
}

int cmd_eval(const Options& o, const std::optional<std::string>& policy) {
  ExperimentConfig cfg = load_config(o);
  const PolicyParams params = load_policy(policy, cfg.env, nullptr);
  const EvalReport e = evaluate(params, cfg.env, cfg.eval, cfg.seed, cfg.train.workers);
  Json j = eval_json(e, cfg.env);
  j["policy"] = policy ? *policy : std::string("uniform");
  j["params_digest"] = params_digest(params);
  const fs::path dir = out_dir(o);
  write_out(dir / "eval.json", j.dump(2) + "\n");
  std::cout << "evaluated " << cfg.eval.num_states << " states x " << cfg.eval.group_size << " rollouts ("
            << j["policy"].get<std::string>() << ")\n";
  print_eval(e, cfg.env);
  return 0;
}

int cmd_stats(const Options& o, const std::optional<std::string>& policy,
              const std::optional<std::string>& demos_path) {
  ExperimentConfig cfg = load_config(o);
  const PolicyParams params = load_policy(policy, cfg.env, nullptr);
  const EvalReport e = evaluate(params, cfg.env, cfg.eval, cfg.seed, cfg.train.workers);
  Json j = {{"policy", policy ? *policy : std::string("uniform")}, {"rollouts", diversity_json(e.diversity)}};
  std::cout << "rollout diversity, " << cfg.eval.group_size << " rollouts per state\n";
  print_diversity(e.diversity, cfg.env);
  if (demos_path) {
    const DemoSet demos = read_demos(*demos_path, cfg.env);
    j["demos"] = demo_summary(demos, cfg.env);
    std::cout << "demo set " << *demos_path << '\n';
    print_demo_summary(j["demos"], cfg.env);
  }
  write_out(out_dir(o) / "stats.json", j.dump(2) + "\n");
  return 0;
}

int cmd_pool_bench(const Options& o, int requests, int concurrency, double latency_us) {
  ExperimentConfig cfg = load_config(o);
  PoolBenchConfig bench;
  bench.requests = requests;
  bench.concurrency = concurrency;
  bench.pool = cfg.pool;
  if (!o.pool_size) bench.pool.num_resources = 8;
  if (!o.failure_rate) bench.pool.failure_rate = 0.1;
  bench.pool.latency_mean_us = latency_us;
  bench.pool.latency_jitter_us = latency_us / 2;
  bench.pool.validate();
  const PoolBenchResult r = run_pool_bench(cfg.env, bench);

  Checks c;
  c.expect(r.stats.mutual_exclusion_violations == 0, "mutual exclusion");
  c.expect(r.stats.max_attempts_observed <= ModelCallPool::kMaxAttempts, "attempt bound");
  c.expect(r.settled(), "unsettled requests");
  c.expect(r.stats.all_free(), "resources still held");
  c.expect(r.stats.queue_depth == 0, "waiters left in queue");
  c.expect(r.mismatches == 0, "pooled results differ from direct execution");
  c.expect(r.bad_traces == 0, "exhausted request without a full attempt trace");
  c.expect(r.stats.max_concurrency <= bench.pool.num_resources, "concurrency above pool size");
  c.expect(r.stats.requests_retried == r.expected_retried, "retry count differs from the fault draws");
  c.expect(r.stats.requests_exhausted == r.expected_exhausted, "exhaustion count differs from the fault draws");

  const double p = bench.pool.failure_rate;
  const bool retry_ok = within_3sigma(r.stats.requests_retried, r.stats.requests, p);
  const bool exhaust_ok = within_3sigma(r.stats.requests_exhausted, r.stats.requests, p * p * p);

  Json j = pool_stats_json(r.stats);
  j["succeeded"] = r.succeeded;
  j["exhausted"] = r.exhausted;
  j["other_errors"] = r.other_errors;
  j["mismatches"] = r.mismatches;
  j["retry_within_3sigma"] = retry_ok;
  j["exhaustion_within_3sigma"] = exhaust_ok;
  j["seconds"] = r.seconds;
  write_out(out_dir(o) / "pool_bench.json", j.dump(2) + "\n");

  std::cout << "requests " << r.stats.requests << " over " << bench.pool.num_resources << " resources, "
            << concurrency << " callers, failure rate " << p << '\n'
            << "succeeded " << r.succeeded << ", exhausted " << r.exhausted << ", other errors " << r.other_errors
            << '\n'
            << "retried " << r.stats.requests_retried << " (3-sigma " << (retry_ok ? "ok" : "outside") << "), "
            << "exhausted " << r.stats.requests_exhausted << " (3-sigma " << (exhaust_ok ? "ok" : "outside") << ")\n"
            << "max concurrency " << r.stats.max_concurrency << ", max attempts " << r.stats.max_attempts_observed
            << ", max queue depth " << r.stats.max_queue_depth_observed << '\n'
            << "mutual exclusion violations: " << r.stats.mutual_exclusion_violations << '\n'
            << "elapsed " << fixed(r.seconds, 3) << " s\n";
  return c.finish();
}

int cmd_ablate(const Options& o, const std::string& mode_arg) {
  ExperimentConfig cfg = load_config(o);
  std::vector<Ablation> modes;
  if (mode_arg == "all")
    modes.assign(std::begin(kAllAblations), std::end(kAllAblations));
  else
    modes.push_back(parse_ablation(mode_arg));

  const fs::path dir = out_dir(o);
  Checks c;
  std::string table = "mode,mean_score,worst_metric,worst_metric_name,distinct_fraction,identical_fraction,"
                      "tool_entropy,train_distinct_fraction,train_identical_fraction,report_digest\n";
  for (Ablation mode : modes) {
    const std::string name(to_string(mode));
    log(Level::Info, "ablation " + name);
    const ExperimentReport rep = run_experiment(cfg, mode);
    for (const StepReport& s : rep.curve)
      c.expect(s.max_in_flight <= cfg.train.max_parallel_rollouts, name + ": in-flight rollouts above cap");
    c.expect(rep.pool.mutual_exclusion_violations == 0, name + ": pool mutual exclusion");
    c.expect(rep.params.finite(), name + ": non-finite parameters");

    const Json summary = experiment_summary(rep, cfg);
    const std::string text = summary.dump(2) + "\n";
    const std::string digest = hex_digest(text);
    const fs::path sub = dir / name;
    fs::create_directories(sub);
    write_out(sub / "summary.json", text);
    write_out(sub / "steps.csv", steps_csv(rep.curve, cfg.env));
    write_out(sub / "mar.csv", mar_csv(rep.curve, cfg.env));

    double train_distinct = 0, train_identical = 0;
    for (const StepReport& s : rep.curve) {
      train_distinct += s.distinct_fraction;
      train_identical += s.identical_fraction;
    }
    if (!rep.curve.empty()) {
      train_distinct /= static_cast<double>(rep.curve.size());
      train_identical /= static_cast<double>(rep.curve.size());
    }
    const EvalReport& e = rep.eval;
    table += name + "," + format_double(e.mean_score) + "," + format_double(e.worst_metric) + "," +
             cfg.env.metrics[static_cast<std::size_t>(e.worst_index)].name + "," +
             format_double(e.diversity.distinct_fraction) + "," + format_double(e.diversity.identical_fraction) +
             "," + format_double(e.diversity.tool_entropy.mean) + "," + format_double(train_distinct) + "," +
             format_double(train_identical) + "," + digest + "\n";

    std::cout << name << ": mean " << fixed(e.mean_score) << ", worst " << fixed(e.worst_metric) << " ("
              << cfg.env.metrics[static_cast<std::size_t>(e.worst_index)].name << "), distinct "
              << fixed(e.diversity.distinct_fraction) << ", train distinct " << fixed(train_distinct)
              << ", train identical " << fixed(train_identical) << "\n  report digest " << digest << '\n';
  }
  write_out(dir / "ablation.csv", table);
  return c.finish();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"toolrl: tool-orchestration training harness"};
  app.require_subcommand(1);
  Options o;

  auto* dump = app.add_subcommand("dump-config", "print the effective config");
  add_common(dump, o);
  add_edp_flags(dump, o);
  add_train_flags(dump, o);

  std::optional<std::size_t> n;
  auto* gen = app.add_subcommand("gen-demos", "generate oracle demonstrations");
  add_common(gen, o);
  gen->add_option("--n", n, "number of demos (default: config demos.count)");

  std::string edp_in;
  auto* edp = app.add_subcommand("edp", "apply order and tool perturbation to a demo file");
  add_common(edp, o);
  add_edp_flags(edp, o);
  edp->add_option("--in", edp_in, "input demo file")->required();

  std::optional<std::string> demos_path;
  bool no_edp = false;
  auto* sft = app.add_subcommand("sft", "behavior cloning");
  add_common(sft, o);
  add_edp_flags(sft, o);
  sft->add_option("--demos", demos_path, "demo file (default: generate and perturb per config)");
  sft->add_flag("--no-edp", no_edp, "skip perturbation when generating demos");

  std::optional<std::string> init;
  auto* rl = app.add_subcommand("rl", "group-rollout policy-gradient training");
  add_common(rl, o);
  add_train_flags(rl, o);
  rl->add_option("--init", init, "starting checkpoint (default: zero policy)");

  std::optional<std::string> policy;
  auto* eval = app.add_subcommand("eval", "evaluate a policy on the held-out states");
  add_common(eval, o);
  eval->add_option("--policy", policy, "checkpoint (default: uniform policy)");

  auto* stats = app.add_subcommand("stats", "rollout and demo diversity tables");
  add_common(stats, o);
  stats->add_option("--policy", policy, "checkpoint (default: uniform policy)");
  stats->add_option("--demos", demos_path, "also summarize this demo file");

  int requests = 512, concurrency = 512;
  double latency_us = 200.0;
  auto* bench = app.add_subcommand("pool-bench", "stress the model-call pool");
  add_common(bench, o);
  bench->add_option("--pool-size", o.pool_size, "pool resources (default 8)")->check(CLI::PositiveNumber);
  bench->add_option("--failure-rate", o.failure_rate, "transient fault probability (default 0.1)");
  bench->add_option("--requests", requests, "requests")->check(CLI::PositiveNumber)->capture_default_str();
  bench->add_option("--concurrency", concurrency, "concurrent callers")->check(CLI::PositiveNumber)->capture_default_str();
  bench->add_option("--latency-us", latency_us, "mean simulated latency")->check(CLI::NonNegativeNumber)->capture_default_str();

  std::string mode = "full";
  auto* ablate = app.add_subcommand("ablate", "run one ablation (or 'all') end to end");
  add_common(ablate, o);
  add_edp_flags(ablate, o);
  add_train_flags(ablate, o);
  ablate->add_option("--mode", mode,
                     "vanilla | no_sft | no_rl | no_edp | no_alpha_t | no_alpha_m | no_mar | no_decouple | "
                     "no_weights | full | all")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*dump) return cmd_dump_config(o);
    if (*gen) return cmd_gen_demos(o, n);
    if (*edp) return cmd_edp(o, edp_in);
    if (*sft) return cmd_sft(o, demos_path, no_edp);
    if (*rl) return cmd_rl(o, init);
    if (*eval) return cmd_eval(o, policy);
    if (*stats) return cmd_stats(o, policy, demos_path);
    if (*bench) return cmd_pool_bench(o, requests, concurrency, latency_us);
    if (*ablate) return cmd_ablate(o, mode);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
