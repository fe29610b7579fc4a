// mtpp: policy-gradient training of marked temporal point processes, with a
// spaced-repetition teaching simulator and a ranked-feed broadcasting
// replayer. Subcommands: train, eval, sample-check, grad-check, calibrate,
// replay-convert, run (dispatch on the config's run.command).

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "mtpp/baselines.hpp"
#include "mtpp/config.hpp"
#include "mtpp/diagnostics.hpp"
#include "mtpp/env_broadcast.hpp"
#include "mtpp/env_memory.hpp"
#include "mtpp/env_toy.hpp"
#include "mtpp/errors.hpp"
#include "mtpp/reinforce.hpp"

namespace fs = std::filesystem;
using namespace mtpp;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

// Collects files written by one command and removes them if it fails.
class OutputTracker {
 public:
  std::string track(const std::string& path) {
    paths_.push_back(path);
    return path;
  }
  void commit() { committed_ = true; }
  ~OutputTracker() {
    if (committed_) return;
    for (const auto& p : paths_) {
      std::error_code ec;
      fs::remove(p, ec);
    }
  }

 private:
  std::vector<std::string> paths_;
  bool committed_ = false;
};

struct EnvBundle {
  std::unique_ptr<Environment> env;
  std::string kind;
  MemoryConfig memory_cfg;                 // kind == "memory"
  std::shared_ptr<const ReplayLog> log;    // kind == "broadcast"
  BroadcastConfig broadcast_cfg;
};

// Every key any command understands; anything else is a config error.
const std::map<std::string, std::set<std::string>>& config_schema() {
  static const std::map<std::string, std::set<std::string>> schema = {
      {"run", {"command", "seed", "out_dir", "threads", "checkpoint_every"}},
      {"env",
       {"kind", "horizon", "reward", "target", "items", "item_file", "item_seed",
        "n0_min", "n0_max", "recall_discount", "forget_penalty", "test_delay",
        "episode_length", "sorting", "dwell_frac", "log_file", "split_file",
        "synth_sources", "synth_rate_min", "synth_rate_max", "synth_span",
        "synth_test_span", "synth_seed"}},
      {"policy",
       {"input_dim", "hidden_dim", "freeze_time_slope", "init_scale", "base_rate",
        "checkpoint"}},
      {"train",
       {"iterations", "batch_episodes", "lr_base", "lr_decay", "q_intensity", "q_mark",
        "use_mean_baseline", "adam_beta1", "adam_beta2", "adam_eps"}},
      {"eval",
       {"policy", "episodes", "scale", "target_budget", "checkpoint", "dump_episodes",
        "use_train_windows"}},
      {"calibrate", {"family", "target", "episodes", "tolerance"}},
      {"convert", {"input", "out_log", "out_manifest", "target_test_events"}},
  };
  return schema;
}

EnvBundle build_environment(ConfigMap& cfg, std::uint64_t seed, bool eval_windows) {
  EnvBundle out;
  out.kind = cfg.get_string("env", "kind");
  if (out.kind == "toy") {
    const double horizon = cfg.get_real("env", "horizon", 2.0);
    const std::string reward = cfg.get_string("env", "reward", "count");
    const double target = cfg.get_real("env", "target", 8.0);
    if (reward == "count") {
      out.env = std::make_unique<CountingEnvironment>(
          horizon, CountingEnvironment::Reward::ActionCount);
    } else if (reward == "target_count") {
      out.env = std::make_unique<CountingEnvironment>(
          horizon, CountingEnvironment::Reward::NegSquaredError, target);
    } else {
      throw config_error("env.reward must be count or target_count for the toy env");
    }
    return out;
  }
  if (out.kind == "memory") {
    MemoryConfig mc;
    mc.recall_discount = cfg.get_real("env", "recall_discount", 0.5);
    mc.forget_penalty = cfg.get_real("env", "forget_penalty", 0.2);
    mc.horizon = cfg.get_real("env", "horizon", 14.0);
    mc.test_delay = cfg.get_real("env", "test_delay", 1.0);
    const std::string item_file = cfg.get_string("env", "item_file", "");
    if (!item_file.empty()) {
      mc.items = load_items(item_file);
      // keep the synth keys consumable so manifests stay strict
      cfg.get_int("env", "items", 10);
      cfg.get_real("env", "n0_min", 0.01);
      cfg.get_real("env", "n0_max", 1.0);
      cfg.get_int("env", "item_seed", static_cast<std::int64_t>(seed));
    } else {
      const int items = static_cast<int>(cfg.get_int("env", "items", 10));
      const double n0_min = cfg.get_real("env", "n0_min", 0.01);
      const double n0_max = cfg.get_real("env", "n0_max", 1.0);
      const auto item_seed = static_cast<std::uint64_t>(
          cfg.get_int("env", "item_seed", static_cast<std::int64_t>(seed)));
      mc.items = synth_items(items, n0_min, n0_max, item_seed);
    }
    out.memory_cfg = mc;
    out.env = std::make_unique<MemoryEnvironment>(mc);
    return out;
  }
  if (out.kind == "broadcast") {
    BroadcastConfig bc;
    bc.episode_length = cfg.get_real("env", "episode_length", 2.0);
    const std::string sorting = cfg.get_string("env", "sorting", "priority");
    if (sorting == "priority")
      bc.sort = FeedSort::PriorityQueue;
    else if (sorting == "chrono")
      bc.sort = FeedSort::ReverseChrono;
    else
      throw config_error("env.sorting must be priority or chrono");
    const std::string reward = cfg.get_string("env", "reward", "rank");
    if (reward == "rank")
      bc.reward = BroadcastReward::AvgRank;
    else if (reward == "time_at_top")
      bc.reward = BroadcastReward::TimeAtTop;
    else
      throw config_error("env.reward must be rank or time_at_top");
    bc.dwell_frac = cfg.get_real("env", "dwell_frac", 0.1);
    bc.use_test_window = eval_windows;

    const std::string log_file = cfg.get_string("env", "log_file", "");
    std::shared_ptr<const ReplayLog> log;
    if (!log_file.empty()) {
      const std::string split_file = cfg.get_string("env", "split_file");
      log = std::make_shared<const ReplayLog>(load_replay_log(log_file, split_file));
      cfg.get_int("env", "synth_sources", 4);
      cfg.get_real("env", "synth_rate_min", 1.0);
      cfg.get_real("env", "synth_rate_max", 4.0);
      cfg.get_real("env", "synth_span", 40.0);
      cfg.get_real("env", "synth_test_span", 2.0 * bc.episode_length);
      cfg.get_int("env", "synth_seed", static_cast<std::int64_t>(seed));
    } else {
      cfg.get_string("env", "split_file", "");
      const int nsrc = static_cast<int>(cfg.get_int("env", "synth_sources", 4));
      const double rmin = cfg.get_real("env", "synth_rate_min", 1.0);
      const double rmax = cfg.get_real("env", "synth_rate_max", 4.0);
      const double span = cfg.get_real("env", "synth_span", 40.0);
      const double test_span =
          cfg.get_real("env", "synth_test_span", 2.0 * bc.episode_length);
      const auto synth_seed = static_cast<std::uint64_t>(
          cfg.get_int("env", "synth_seed", static_cast<std::int64_t>(seed)));
      if (nsrc < 1) throw config_error("env.synth_sources must be >= 1");
      std::vector<SynthSource> sources;
      for (int i = 0; i < nsrc; ++i) {
        const double frac = nsrc == 1 ? 0.0 : static_cast<double>(i) / (nsrc - 1);
        SynthSource s;
        s.name = "src" + std::to_string(i);
        s.rate = rmin * std::pow(rmax / rmin, frac);
        sources.push_back(s);
      }
      log = std::make_shared<const ReplayLog>(
          synth_competitors(sources, span, test_span, synth_seed));
    }
    out.log = log;
    out.broadcast_cfg = bc;
    out.env = std::make_unique<BroadcastEnvironment>(log, bc);
    return out;
  }
  throw config_error("env.kind must be toy, memory, or broadcast");
}

PolicyParams build_policy(ConfigMap& cfg, const Environment& env, std::uint64_t seed) {
  const std::string checkpoint = cfg.get_string("policy", "checkpoint", "");
  PolicyDims dims;
  dims.input_dim = static_cast<int>(cfg.get_int("policy", "input_dim", 8));
  dims.hidden_dim = static_cast<int>(cfg.get_int("policy", "hidden_dim", 8));
  dims.action_marks = env.action_mark_count();
  dims.feedback_marks = env.feedback_mark_count();
  dims.freeze_time_slope = cfg.get_bool("policy", "freeze_time_slope", false);
  const double init_scale = cfg.get_real("policy", "init_scale", 0.1);
  const double base_rate = cfg.get_real("policy", "base_rate", 1.0);
  if (!checkpoint.empty()) {
    PolicyParams p = load_checkpoint(checkpoint);
    if (p.dims.action_marks != dims.action_marks ||
        p.dims.feedback_marks != dims.feedback_marks)
      throw data_error("checkpoint mark vocabulary does not match the environment");
    return p;
  }
  return init_params(dims, derive_key(seed, 0x706f6cULL, 0, 0), init_scale, base_rate);
}

TrainConfig build_train_config(ConfigMap& cfg, const std::string& env_kind,
                               const std::string& env_reward, std::uint64_t seed,
                               int threads) {
  // hyperparameter defaults per benchmark
  int def_iters = 2000, def_batch = 16;
  double def_lr = 0.02, def_decay = 2e-3, def_ql = 0.1, def_qm = 0.0;
  if (env_kind == "memory") {
    def_iters = 5000;
    def_batch = 32;
    def_lr = 0.02;
    def_decay = 2e-3;
    def_ql = 1e-2;
    def_qm = 5e-3;
  } else if (env_kind == "broadcast") {
    def_iters = 1000;
    def_batch = 16;
    def_lr = 1e-2;
    def_decay = 1e-4;
    def_ql = env_reward == "time_at_top" ? 0.33 : 100.0;
    def_qm = 0.0;
  }
  TrainConfig tc;
  tc.iterations = static_cast<int>(cfg.get_int("train", "iterations", def_iters));
  tc.batch_episodes = static_cast<int>(cfg.get_int("train", "batch_episodes", def_batch));
  tc.lr.base = cfg.get_real("train", "lr_base", def_lr);
  tc.lr.decay = cfg.get_real("train", "lr_decay", def_decay);
  tc.q_intensity = cfg.get_real("train", "q_intensity", def_ql);
  tc.q_mark = cfg.get_real("train", "q_mark", def_qm);
  tc.use_mean_baseline = cfg.get_bool("train", "use_mean_baseline", false);
  tc.adam_beta1 = cfg.get_real("train", "adam_beta1", 0.9);
  tc.adam_beta2 = cfg.get_real("train", "adam_beta2", 0.999);
  tc.adam_eps = cfg.get_real("train", "adam_eps", 1e-8);
  tc.seed = seed;
  tc.threads = threads;
  tc.checkpoint_every = static_cast<int>(cfg.get_int("run", "checkpoint_every", 0));
  return tc;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) throw data_error("cannot open for write: " + path);
  os << text;
  if (!os) throw data_error("write failed: " + path);
}

nlohmann::json summary_of(const SummaryStats& s) {
  return {{"mean", s.mean},   {"stddev", s.stddev}, {"median", s.median},
          {"q25", s.q25},     {"q75", s.q75},       {"min", s.min},
          {"max", s.max},     {"count", s.count}};
}

SourceFactory resolve_eval_source(ConfigMap& cfg, const EnvBundle& bundle,
                                  const PolicyParams* trained, std::uint64_t seed,
                                  int threads, double* scale_out) {
  const std::string policy = cfg.get_string("eval", "policy", "trained");
  const double scale = cfg.get_real("eval", "scale", 0.0);
  const double target = cfg.get_real("eval", "target_budget", 0.0);
  auto pick_scale = [&](const std::function<SourceFactory(double)>& family) {
    if (scale > 0.0) {
      if (scale_out) *scale_out = scale;
      return family(scale);
    }
    if (target <= 0.0)
      throw config_error("eval: baseline policies need eval.scale or eval.target_budget");
    const BudgetCalibration cal =
        calibrate_budget(family, *bundle.env, target, seed, 200, 0.10, threads);
    if (scale_out) *scale_out = cal.scale;
    return family(cal.scale);
  };
  if (policy == "trained") {
    if (trained == nullptr) throw config_error("eval: no trained policy available");
    if (scale_out) *scale_out = 0.0;
    return policy_source_factory(*trained);
  }
  if (policy == "uniform")
    return pick_scale([](double s) { return uniform_poisson(s); });
  if (policy == "rank-chrono")
    return pick_scale([](double s) { return rank_proportional(s, RankFlavor::Chrono); });
  if (policy == "rank-priority")
    return pick_scale([](double s) { return rank_proportional(s, RankFlavor::Priority); });
  if (policy == "recall-gap")
    return pick_scale([](double s) { return recall_gap(s); });
  throw config_error("eval.policy must be one of trained, uniform, rank-chrono, "
                     "rank-priority, recall-gap");
}

void dump_episodes_jsonl(const std::string& path, const std::vector<EpisodeHistory>& hs) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw data_error("cannot open for write: " + path);
  for (std::size_t i = 0; i < hs.size(); ++i) {
    for (const Event& e : hs[i].events()) {
      nlohmann::json j;
      j["episode"] = i;
      j["t"] = e.time;
      j["kind"] = e.kind == EventKind::Action ? "action" : "feedback";
      if (e.has_mark())
        j["mark"] = e.mark;
      else
        j["mark"] = nullptr;
      os << j.dump() << "\n";
    }
  }
}

// ---------------------------------------------------------------------------

int cmd_train(ConfigMap cfg) {
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("run", "seed", 0));
  const int threads = static_cast<int>(cfg.get_int("run", "threads", 1));
  const std::string out_dir = cfg.get_string("run", "out_dir", "mtpp-run");
  cfg.set("run", "command", "train");
  cfg.get_string("run", "command");
  fs::create_directories(out_dir);

  EnvBundle bundle = build_environment(cfg, seed, /*eval_windows=*/false);
  const std::string env_reward = cfg.has("env", "reward")
                                     ? cfg.get_string("env", "reward")
                                     : std::string("rank");
  PolicyParams params = build_policy(cfg, *bundle.env, seed);
  TrainConfig tc = build_train_config(cfg, bundle.kind, env_reward, seed, threads);
  cfg.validate_known(config_schema());

  OutputTracker outputs;
  const std::string stats_path = outputs.track(out_dir + "/stats.csv");
  std::ofstream stats(stats_path, std::ios::trunc);
  if (!stats) throw data_error("cannot open for write: " + stats_path);
  stats << "iteration,mean_reward,mean_actions,penalized_objective,grad_norm\n";

  TrainCallbacks callbacks;
  callbacks.on_iteration = [&](int iter, const IterationStats& row) {
    stats << iter << "," << format_real(row.mean_reward) << ","
          << format_real(row.mean_actions) << "," << format_real(row.penalized_objective)
          << "," << format_real(row.grad_norm) << "\n";
  };
  callbacks.on_checkpoint = [&](int iter, const PolicyParams& p) {
    save_checkpoint(outputs.track(out_dir + "/checkpoint-" + std::to_string(iter + 1) +
                                  ".bin"),
                    p);
  };

  const TrainingStats ts = train(*bundle.env, params, tc, callbacks);
  stats.close();

  const std::string final_ckpt = outputs.track(out_dir + "/checkpoint-final.bin");
  save_checkpoint(final_ckpt, params);

  nlohmann::json summary;
  summary["command"] = "train";
  summary["iterations"] = ts.iterations.size();
  summary["episodes_total"] = ts.iterations.size() * static_cast<std::size_t>(tc.batch_episodes);
  if (!ts.iterations.empty()) {
    const std::size_t tail = std::min<std::size_t>(ts.iterations.size(), 50);
    double mr = 0.0, ma = 0.0;
    for (std::size_t i = ts.iterations.size() - tail; i < ts.iterations.size(); ++i) {
      mr += ts.iterations[i].mean_reward / static_cast<double>(tail);
      ma += ts.iterations[i].mean_actions / static_cast<double>(tail);
    }
    summary["tail_mean_reward"] = mr;
    summary["tail_mean_actions"] = ma;
  }
  summary["checkpoint"] = final_ckpt;
  write_text(outputs.track(out_dir + "/summary.json"), summary.dump(2) + "\n");
  write_text(outputs.track(out_dir + "/run-manifest.json"), cfg.manifest_json(seed));
  outputs.commit();
  std::cout << "train: " << ts.iterations.size() << " iterations, outputs in " << out_dir
            << "\n";
  return 0;
}

int cmd_eval(ConfigMap cfg) {
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("run", "seed", 0));
  const int threads = static_cast<int>(cfg.get_int("run", "threads", 1));
  const std::string out_dir = cfg.get_string("run", "out_dir", "mtpp-run");
  cfg.set("run", "command", "eval");
  cfg.get_string("run", "command");
  cfg.get_int("run", "checkpoint_every", 0);
  fs::create_directories(out_dir);

  const bool use_train_windows = cfg.get_bool("eval", "use_train_windows", false);
  EnvBundle bundle = build_environment(cfg, seed, /*eval_windows=*/!use_train_windows);

  const std::string policy_name = cfg.get_string("eval", "policy", "trained");
  std::optional<PolicyParams> trained;
  if (policy_name == "trained") {
    const std::string ckpt = cfg.get_string("eval", "checkpoint", "");
    if (ckpt.empty())
      throw config_error("eval: eval.checkpoint is required for the trained policy");
    trained = load_checkpoint(ckpt);
  } else {
    cfg.get_string("eval", "checkpoint", "");
  }
  double used_scale = 0.0;
  const SourceFactory factory = resolve_eval_source(
      cfg, bundle, trained ? &*trained : nullptr, seed, threads, &used_scale);

  const int episodes = static_cast<int>(cfg.get_int("eval", "episodes", 1000));
  const std::string dump_path = cfg.get_string("eval", "dump_episodes", "");
  const bool keep = !dump_path.empty() || bundle.kind == "memory";
  cfg.validate_known(config_schema());

  const EvalResult ev = evaluate(*bundle.env, factory, episodes, seed, threads, keep);

  OutputTracker outputs;
  const std::string csv_path = outputs.track(out_dir + "/eval.csv");
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw data_error("cannot open for write: " + csv_path);
  csv << "episode,reward,actions\n";
  for (std::size_t i = 0; i < ev.rewards.size(); ++i)
    csv << i << "," << format_real(ev.rewards[i]) << ","
        << format_real(ev.action_counts[i]) << "\n";
  csv.close();

  nlohmann::json summary;
  summary["command"] = "eval";
  summary["policy"] = policy_name;
  summary["episodes"] = episodes;
  if (used_scale > 0.0) summary["scale"] = used_scale;
  summary["reward"] = summary_of(ev.reward_summary());
  summary["actions"] = summary_of(ev.action_summary());
  if (bundle.kind == "memory" && !ev.histories.empty()) {
    double difficulty_sum = 0.0;
    long reviews = 0;
    for (const auto& h : ev.histories)
      for (const Event& e : h.events())
        if (e.kind == EventKind::Action && e.has_mark()) {
          difficulty_sum +=
              bundle.memory_cfg.items[static_cast<std::size_t>(e.mark)].initial_rate;
          ++reviews;
        }
    if (reviews > 0) summary["mean_selected_difficulty"] = difficulty_sum / reviews;
  }
  write_text(outputs.track(out_dir + "/summary.json"), summary.dump(2) + "\n");
  if (!dump_path.empty()) {
    dump_episodes_jsonl(outputs.track(dump_path), ev.histories);
  }
  write_text(outputs.track(out_dir + "/run-manifest.json"), cfg.manifest_json(seed));
  outputs.commit();
  std::cout << "eval: " << episodes << " episodes, mean reward "
            << format_real(ev.reward_summary().mean) << ", outputs in " << out_dir << "\n";
  return 0;
}

int cmd_calibrate(ConfigMap cfg) {
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("run", "seed", 0));
  const int threads = static_cast<int>(cfg.get_int("run", "threads", 1));
  const std::string out_dir = cfg.get_string("run", "out_dir", "mtpp-run");
  cfg.set("run", "command", "calibrate");
  cfg.get_string("run", "command");
  cfg.get_int("run", "checkpoint_every", 0);
  fs::create_directories(out_dir);

  EnvBundle bundle = build_environment(cfg, seed, /*eval_windows=*/false);
  const std::string family_name = cfg.get_string("calibrate", "family");
  const double target = cfg.get_real("calibrate", "target");
  const int episodes = static_cast<int>(cfg.get_int("calibrate", "episodes", 200));
  const double tol = cfg.get_real("calibrate", "tolerance", 0.10);
  cfg.validate_known(config_schema());

  std::function<SourceFactory(double)> family;
  if (family_name == "uniform")
    family = [](double s) { return uniform_poisson(s); };
  else if (family_name == "rank-chrono")
    family = [](double s) { return rank_proportional(s, RankFlavor::Chrono); };
  else if (family_name == "rank-priority")
    family = [](double s) { return rank_proportional(s, RankFlavor::Priority); };
  else if (family_name == "recall-gap")
    family = [](double s) { return recall_gap(s); };
  else
    throw config_error("calibrate.family must be uniform, rank-chrono, rank-priority, "
                       "or recall-gap");

  const BudgetCalibration cal =
      calibrate_budget(family, *bundle.env, target, seed, episodes, tol, threads);

  OutputTracker outputs;
  nlohmann::json j;
  j["family"] = family_name;
  j["target"] = cal.target;
  j["achieved"] = cal.achieved;
  j["scale"] = cal.scale;
  write_text(outputs.track(out_dir + "/calibration.json"), j.dump(2) + "\n");
  write_text(outputs.track(out_dir + "/run-manifest.json"), cfg.manifest_json(seed));
  outputs.commit();
  std::cout << "calibrate: scale " << format_real(cal.scale) << " achieves "
            << format_real(cal.achieved) << " actions (target " << format_real(cal.target)
            << ")\n";
  return 0;
}

int cmd_sample_check(int samples, std::uint64_t seed, double tolerance) {
  const auto results = sampler_distribution_check(samples, seed);
  bool ok = true;
  for (const auto& r : results) {
    const bool pass = r.ks_analytic < tolerance && r.ks_thinning < 1.5 * tolerance;
    ok = ok && pass;
    std::cout << (pass ? "[pass] " : "[FAIL] ") << r.name << ": KS vs analytic CDF "
              << format_real(r.ks_analytic) << ", KS vs thinning oracle "
              << format_real(r.ks_thinning) << "\n";
  }
  return ok ? 0 : kExitNumeric;
}

int cmd_grad_check(int configs, std::uint64_t seed, double tolerance) {
  double worst = 0.0;
  std::string worst_tensor;
  for (int i = 0; i < configs; ++i) {
    const bool marks = i % 2 == 0;
    const bool freeze = (i / 2) % 2 == 0;
    const RandomEpisodeCase cs =
        random_episode_case(seed + static_cast<std::uint64_t>(i), marks, freeze);
    RegularizerSpec spec{true, marks};
    const FdReport report = finite_difference_check(cs.params, cs.history, spec);
    if (report.max_rel_err > worst) {
      worst = report.max_rel_err;
      worst_tensor = report.worst_tensor;
    }
  }
  std::cout << "grad-check: max relative error " << format_real(worst) << " (tensor "
            << (worst_tensor.empty() ? "-" : worst_tensor) << ") over " << configs
            << " configurations\n";
  return worst <= tolerance ? 0 : kExitNumeric;
}

int cmd_replay_convert(ConfigMap cfg) {
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("run", "seed", 0));
  const std::string out_dir = cfg.get_string("run", "out_dir", "mtpp-run");
  cfg.set("run", "command", "replay-convert");
  cfg.get_string("run", "command");
  cfg.get_int("run", "threads", 1);
  cfg.get_int("run", "checkpoint_every", 0);
  fs::create_directories(out_dir);

  const std::string input = cfg.get_string("convert", "input");
  const std::string out_log = cfg.get_string("convert", "out_log", out_dir + "/log.jsonl");
  const std::string out_manifest =
      cfg.get_string("convert", "out_manifest", out_dir + "/split.json");
  const double target_events = cfg.get_real("convert", "target_test_events", 200.0);
  cfg.validate_known(config_schema());

  std::vector<ReplayRecord> records = load_replay_records(input);
  OutputTracker outputs;
  ReplayLog log;
  if (records.empty()) {
    std::cerr << "[mtpp] replay-convert: input is empty; writing empty outputs\n";
  } else {
    normalize_replay_records(records);
    log.records = records;
    const double begin = records.front().t;
    const double end = records.back().t;
    if (!(end > begin)) throw data_error("replay-convert: all records share one instant");
    // choose the test window so its expected event count hits the target,
    // with the rate estimated on the remaining training part
    double test_span = (end - begin) * 0.2;
    for (int pass = 0; pass < 4; ++pass) {
      const double split = end - test_span;
      std::size_t train_count = 0;
      for (const auto& r : records)
        if (r.t < split) ++train_count;
      if (train_count == 0) {
        test_span = (end - begin) * 0.5;
        break;
      }
      const double rate = static_cast<double>(train_count) / (split - begin);
      test_span = std::min(target_events / rate, (end - begin) * 0.9);
    }
    log.train_begin = begin;
    log.train_end = end - test_span;
    log.test_begin = end - test_span;
    log.test_end = end;
  }
  save_replay_records(outputs.track(out_log), log.records);
  save_split_manifest(outputs.track(out_manifest), log);
  write_text(outputs.track(out_dir + "/run-manifest.json"), cfg.manifest_json(seed));
  outputs.commit();
  std::size_t test_count = 0;
  for (const auto& r : log.records)
    if (r.t >= log.test_begin) ++test_count;
  std::cout << "replay-convert: " << log.records.size() << " records, test window ["
            << format_real(log.test_begin) << ", " << format_real(log.test_end) << ") with "
            << test_count << " events\n";
  return 0;
}

int dispatch(ConfigMap cfg) {
  const std::string command = cfg.get_string("run", "command", "train");
  if (command == "train") return cmd_train(std::move(cfg));
  if (command == "eval") return cmd_eval(std::move(cfg));
  if (command == "calibrate") return cmd_calibrate(std::move(cfg));
  if (command == "replay-convert") return cmd_replay_convert(std::move(cfg));
  if (command == "sample-check" || command == "grad-check")
    throw config_error("run " + command + " via its own subcommand");
  throw config_error("unknown run.command: " + command);
}

ConfigMap load_config(const std::string& config_path, const std::string& manifest_path,
                      const std::vector<std::string>& overrides) {
  if (config_path.empty() == manifest_path.empty())
    throw config_error("provide exactly one of --config and --manifest");
  ConfigMap cfg = config_path.empty() ? ConfigMap::from_manifest_file(manifest_path)
                                      : ConfigMap::parse_ini_file(config_path);
  for (const auto& o : overrides) cfg.apply_override(o);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"policy-gradient control of marked temporal point processes"};
  app.require_subcommand(1);

  std::string config_path, manifest_path;
  std::vector<std::string> overrides;

  auto add_config_opts = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "INI configuration file");
    sub->add_option("--manifest", manifest_path, "run manifest to reproduce");
    sub->add_option("--set", overrides, "override, section.key=value")->take_all();
  };

  CLI::App* run = app.add_subcommand("run", "dispatch on the config's run.command");
  add_config_opts(run);
  CLI::App* train_cmd = app.add_subcommand("train", "train a policy");
  add_config_opts(train_cmd);
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a policy or baseline");
  add_config_opts(eval_cmd);
  CLI::App* cal_cmd = app.add_subcommand("calibrate", "budget-calibrate a scheduler");
  add_config_opts(cal_cmd);
  CLI::App* conv_cmd = app.add_subcommand("replay-convert",
                                          "split a raw event log into train/test windows");
  add_config_opts(conv_cmd);

  int samples = 100000, configs = 50;
  std::uint64_t check_seed = 0;
  double ks_tol = 0.01, fd_tol = 1e-4;
  CLI::App* sample_cmd =
      app.add_subcommand("sample-check", "distributional self-check of the sampler");
  sample_cmd->add_option("--samples", samples, "draws per scripted intensity");
  sample_cmd->add_option("--seed", check_seed, "stream seed");
  sample_cmd->add_option("--tolerance", ks_tol, "KS threshold");
  CLI::App* grad_cmd =
      app.add_subcommand("grad-check", "finite-difference check of episode gradients");
  grad_cmd->add_option("--configs", configs, "random configurations");
  grad_cmd->add_option("--seed", check_seed, "case seed");
  grad_cmd->add_option("--tolerance", fd_tol, "max relative error allowed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sample_cmd->parsed()) return cmd_sample_check(samples, check_seed, ks_tol);
    if (grad_cmd->parsed()) return cmd_grad_check(configs, check_seed, fd_tol);
    ConfigMap cfg = load_config(config_path, manifest_path, overrides);
    if (run->parsed()) return dispatch(std::move(cfg));
    if (train_cmd->parsed()) {
      cfg.set("run", "command", "train");
      return cmd_train(std::move(cfg));
    }
    if (eval_cmd->parsed()) {
      cfg.set("run", "command", "eval");
      return cmd_eval(std::move(cfg));
    }
    if (cal_cmd->parsed()) {
      cfg.set("run", "command", "calibrate");
      return cmd_calibrate(std::move(cfg));
    }
    if (conv_cmd->parsed()) {
      cfg.set("run", "command", "replay-convert");
      return cmd_replay_convert(std::move(cfg));
    }
    throw config_error("no subcommand selected");
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const precondition_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const numeric_error& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
