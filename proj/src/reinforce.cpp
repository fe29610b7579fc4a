#include "mtpp/reinforce.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <optional>
#include <thread>

#include "mtpp/errors.hpp"

namespace mtpp {

PolicyParams estimate_gradient(std::span<const EpisodeResult> batch, double q_intensity,
                               double q_mark, bool use_mean_baseline) {
  if (batch.empty()) throw precondition_error("estimate_gradient: empty batch");
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double baseline = 0.0;
  if (use_mean_baseline) {
    for (const EpisodeResult& r : batch)
      baseline += (r.reward - q_intensity * r.bundle.intensity_sq_integral -
                   q_mark * r.bundle.mark_entropy_integral) *
                  inv_n;
  }
  PolicyParams grad = zeros_like(batch.front().bundle.d_log_prob);
  for (const EpisodeResult& r : batch) {
    const double penalized = r.reward - q_intensity * r.bundle.intensity_sq_integral -
                             q_mark * r.bundle.mark_entropy_integral;
    add_scaled(grad, r.bundle.d_log_prob, (penalized - baseline) * inv_n);
    if (q_intensity != 0.0) add_scaled(grad, r.bundle.d_intensity_sq, -q_intensity * inv_n);
    if (q_mark != 0.0) add_scaled(grad, r.bundle.d_mark_entropy, -q_mark * inv_n);
  }
  return grad;
}

AdamState AdamState::init(const PolicyParams& like) {
  return AdamState{zeros_like(like), zeros_like(like), 0};
}

void adam_step(PolicyParams& params, const PolicyParams& grad, AdamState& state, double lr,
               double beta1, double beta2, double eps) {
  if (const char* bad = first_non_finite(grad))
    throw numeric_error(std::string("adam_step: non-finite gradient in tensor ") + bad);
  state.step += 1;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  std::vector<TensorView> pv, mv, vv;
  for_each_tensor(params, [&](TensorView v) { pv.push_back(v); });
  for_each_tensor(state.m, [&](TensorView v) { mv.push_back(v); });
  for_each_tensor(state.v, [&](TensorView v) { vv.push_back(v); });
  std::vector<TensorConstView> gv;
  for_each_tensor(grad, [&](TensorConstView v) { gv.push_back(v); });
  for (std::size_t k = 0; k < pv.size(); ++k) {
    for (Eigen::Index i = 0; i < pv[k].size; ++i) {
      const double g = gv[k].data[i];
      double& m = mv[k].data[i];
      double& v = vv[k].data[i];
      m = beta1 * m + (1.0 - beta1) * g;
      v = beta2 * v + (1.0 - beta2) * g * g;
      pv[k].data[i] += lr * (m / c1) / (std::sqrt(v / c2) + eps);
    }
  }
  if (params.dims.freeze_time_slope) params.time_slope = 0.0;
}

namespace {

// Runs fn(i) for i in [0, count) over `threads` workers; each index is
// processed by a fixed worker so results land in deterministic slots.
void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex error_mu;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t]() {
      try {
        for (int i = t; i < count; i += threads) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

std::vector<EpisodeResult> rollout_batch(const Environment& proto, const PolicyParams& params,
                                         const RegularizerSpec& spec, std::uint64_t seed,
                                         std::uint64_t iteration, int count, int threads) {
  std::vector<std::optional<EpisodeResult>> slots(static_cast<std::size_t>(count));
  parallel_for(count, threads, [&](int i) {
    const EpisodeKeys keys{seed, iteration, static_cast<std::uint64_t>(i)};
    auto env = proto.clone();
    PolicySource source(params);
    EpisodeOutcome outcome = run_episode(*env, source, keys);
    GradientBundle bundle = episode_backward(params, outcome.history, spec);
    slots[static_cast<std::size_t>(i)] =
        EpisodeResult{std::move(outcome.history), outcome.reward, std::move(bundle)};
  });
  std::vector<EpisodeResult> batch;
  batch.reserve(slots.size());
  for (auto& s : slots) batch.push_back(std::move(*s));
  return batch;
}

TrainingStats train(const Environment& proto, PolicyParams& params, const TrainConfig& cfg,
                    const TrainCallbacks& callbacks) {
  if (cfg.iterations < 0 || cfg.batch_episodes < 1)
    throw precondition_error("train: iterations must be >= 0 and batch_episodes >= 1");
  if (cfg.q_intensity < 0.0 || cfg.q_mark < 0.0)
    throw precondition_error("train: regularizer coefficients must be >= 0");
  if (cfg.q_mark > 0.0 && proto.action_mark_count() <= 0)
    throw config_error("train: mark-entropy regularizer needs a marked environment");
  RegularizerSpec spec;
  spec.intensity_sq = cfg.q_intensity > 0.0;
  spec.mark_entropy = cfg.q_mark > 0.0;

  AdamState adam = AdamState::init(params);
  TrainingStats stats;
  stats.iterations.reserve(static_cast<std::size_t>(cfg.iterations));
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const auto batch = rollout_batch(proto, params, spec, cfg.seed,
                                     static_cast<std::uint64_t>(iter), cfg.batch_episodes,
                                     cfg.threads);
    const PolicyParams grad =
        estimate_gradient(batch, cfg.q_intensity, cfg.q_mark, cfg.use_mean_baseline);

    IterationStats row;
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (const EpisodeResult& r : batch) {
      row.mean_reward += r.reward * inv_n;
      row.mean_actions += static_cast<double>(r.history.action_count()) * inv_n;
      row.penalized_objective += (r.reward - cfg.q_intensity * r.bundle.intensity_sq_integral -
                                  cfg.q_mark * r.bundle.mark_entropy_integral) *
                                 inv_n;
    }
    row.grad_norm = l2_norm(grad);
    stats.iterations.push_back(row);

    adam_step(params, grad, adam, cfg.lr.at(iter), cfg.adam_beta1, cfg.adam_beta2,
              cfg.adam_eps);
    if (callbacks.on_iteration) callbacks.on_iteration(iter, row);
    if (callbacks.on_checkpoint && cfg.checkpoint_every > 0 &&
        (iter + 1) % cfg.checkpoint_every == 0)
      callbacks.on_checkpoint(iter, params);
  }
  return stats;
}

SummaryStats summarize(std::vector<double> values) {
  SummaryStats s;
  s.count = values.size();
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
  };
  for (double x : values) s.mean += x;
  s.mean /= static_cast<double>(values.size());
  for (double x : values) s.stddev += (x - s.mean) * (x - s.mean);
  s.stddev = values.size() > 1
                 ? std::sqrt(s.stddev / static_cast<double>(values.size() - 1))
                 : 0.0;
  s.median = quantile(0.5);
  s.q25 = quantile(0.25);
  s.q75 = quantile(0.75);
  s.min = values.front();
  s.max = values.back();
  return s;
}

EvalResult evaluate(const Environment& proto, const SourceFactory& make_source, int episodes,
                    std::uint64_t seed, int threads, bool keep_histories,
                    std::uint64_t iteration_tag) {
  if (episodes < 1) throw precondition_error("evaluate: episodes must be >= 1");
  std::vector<double> rewards(static_cast<std::size_t>(episodes));
  std::vector<double> actions(static_cast<std::size_t>(episodes));
  std::vector<std::optional<EpisodeHistory>> histories(
      keep_histories ? static_cast<std::size_t>(episodes) : 0);
  parallel_for(episodes, threads, [&](int i) {
    const EpisodeKeys keys{seed, iteration_tag, static_cast<std::uint64_t>(i)};
    auto env = proto.clone();
    auto source = make_source(*env);
    EpisodeOutcome outcome = run_episode(*env, *source, keys);
    rewards[static_cast<std::size_t>(i)] = outcome.reward;
    actions[static_cast<std::size_t>(i)] =
        static_cast<double>(outcome.history.action_count());
    if (keep_histories) histories[static_cast<std::size_t>(i)] = std::move(outcome.history);
  });
  EvalResult res;
  res.rewards = std::move(rewards);
  res.action_counts = std::move(actions);
  if (keep_histories) {
    res.histories.reserve(histories.size());
    for (auto& h : histories) res.histories.push_back(std::move(*h));
  }
  return res;
}

}  // namespace mtpp
