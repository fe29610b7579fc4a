#ifndef MTPP_REINFORCE_HPP
#define MTPP_REINFORCE_HPP

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mtpp/episode.hpp"
#include "mtpp/policy.hpp"

namespace mtpp {

struct LrSchedule {
  double base = 0.02;
  double decay = 2e-3;

  double at(std::int64_t i) const { return base / (1.0 + decay * static_cast<double>(i)); }
};

struct TrainConfig {
  int iterations = 100;        // gradient steps
  int batch_episodes = 16;     // rollouts averaged per step
  LrSchedule lr;
  double q_intensity = 0.0;    // coefficient on the lambda^2 integral
  double q_mark = 0.0;         // coefficient on the mark-entropy integral
  std::uint64_t seed = 0;
  bool use_mean_baseline = false;  // subtract the batch-mean penalized reward
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int threads = 1;
  int checkpoint_every = 0;    // 0 disables periodic checkpoints
};

struct EpisodeResult {
  EpisodeHistory history;
  double reward = 0.0;
  GradientBundle bundle;
};

struct IterationStats {
  double mean_reward = 0.0;
  double mean_actions = 0.0;
  double penalized_objective = 0.0;
  double grad_norm = 0.0;
};

struct TrainingStats {
  std::vector<IterationStats> iterations;
};

// Score-function estimate of the penalized-objective gradient over one batch:
// mean of (R - q_l*int(lambda^2) - q_m*int(H) - baseline) * grad(logP)
//       - q_l*grad(int lambda^2) - q_m*grad(int H).
// Ascent direction: callers add it.
PolicyParams estimate_gradient(std::span<const EpisodeResult> batch, double q_intensity,
                               double q_mark, bool use_mean_baseline);

struct AdamState {
  PolicyParams m;
  PolicyParams v;
  std::int64_t step = 0;

  static AdamState init(const PolicyParams& like);
};

// One Adam ascent step with the given learning rate. Throws numeric_error on
// a non-finite gradient.
void adam_step(PolicyParams& params, const PolicyParams& grad, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// Rolls `count` episodes of the current policy against clones of the
// environment, in deterministic per-episode streams; safe to parallelize.
std::vector<EpisodeResult> rollout_batch(const Environment& proto, const PolicyParams& params,
                                         const RegularizerSpec& spec, std::uint64_t seed,
                                         std::uint64_t iteration, int count, int threads);

struct TrainCallbacks {
  std::function<void(int, const IterationStats&)> on_iteration;
  std::function<void(int, const PolicyParams&)> on_checkpoint;
};

// REINFORCE with Adam: batches of rollouts under a parameter snapshot, then
// one ascent step per iteration. Fully reproducible from (seed, config, env).
TrainingStats train(const Environment& proto, PolicyParams& params, const TrainConfig& cfg,
                    const TrainCallbacks& callbacks = {});

struct SummaryStats {
  double mean = 0.0, stddev = 0.0, median = 0.0, q25 = 0.0, q75 = 0.0, min = 0.0, max = 0.0;
  std::size_t count = 0;
};

SummaryStats summarize(std::vector<double> values);

struct EvalResult {
  std::vector<double> rewards;
  std::vector<double> action_counts;
  std::vector<EpisodeHistory> histories;  // populated when keep_histories

  SummaryStats reward_summary() const { return summarize(rewards); }
  SummaryStats action_summary() const { return summarize(action_counts); }
};

// Deterministic evaluation rollouts of any action source.
EvalResult evaluate(const Environment& proto, const SourceFactory& make_source, int episodes,
                    std::uint64_t seed, int threads = 1, bool keep_histories = false,
                    std::uint64_t iteration_tag = 0xE7A1u);

}  // namespace mtpp

#endif
