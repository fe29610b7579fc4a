#include <doctest.h>

#include <cmath>
#include <limits>

#include "mtpp/env_toy.hpp"
#include "mtpp/errors.hpp"
#include "mtpp/reinforce.hpp"
#include "oracles.hpp"

using namespace mtpp;

namespace {

PolicyParams flat_policy(double log_rate, std::uint64_t seed = 1, double scale = 0.0) {
  PolicyDims dims{2, 2, 0, 0, false};
  PolicyParams p = init_params(dims, seed, scale, 1.0);
  p.intensity_bias = log_rate;
  return p;
}

std::vector<EpisodeResult> toy_batch(const PolicyParams& p, double T, int count,
                                     std::uint64_t seed, std::uint64_t iter,
                                     bool with_sq = false) {
  CountingEnvironment env(T, CountingEnvironment::Reward::ActionCount);
  RegularizerSpec spec{with_sq, false};
  return rollout_batch(env, p, spec, seed, iter, count, 1);
}

}  // namespace

TEST_CASE("estimate_gradient: zero rewards with no regularizers give zero") {
  const PolicyParams p = flat_policy(std::log(2.0));
  auto batch = toy_batch(p, 1.0, 8, 41, 0);
  for (auto& r : batch) r.reward = 0.0;
  const PolicyParams g = estimate_gradient(batch, 0.0, 0.0, false);
  CHECK(l2_norm(g) == 0.0);
}

TEST_CASE("estimate_gradient: empty batch is an error") {
  CHECK_THROWS_AS(estimate_gradient({}, 0.0, 0.0, false), precondition_error);
}

TEST_CASE("estimate_gradient: matches the analytic count gradient on average") {
  // homogeneous rate exp(b): d/db E[N(T)] = exp(b) T
  const double b = std::log(1.5), T = 2.0;
  const PolicyParams p = flat_policy(b);
  const double analytic = std::exp(b) * T;
  double mean = 0.0;
  const int batches = 500, per = 20;  // 1e4 episodes; the acceptance run uses 1e5
  for (int it = 0; it < batches; ++it) {
    const auto batch = toy_batch(p, T, per, 99, static_cast<std::uint64_t>(it));
    mean += estimate_gradient(batch, 0.0, 0.0, false).intensity_bias;
  }
  mean /= batches;
  CHECK(std::abs(mean - analytic) <= 0.10 * analytic);
}

TEST_CASE("estimate_gradient: the mean baseline leaves the expectation alone") {
  const double b = std::log(1.5), T = 2.0;
  const PolicyParams p = flat_policy(b);
  double with = 0.0, without = 0.0;
  const int batches = 400, per = 25;
  for (int it = 0; it < batches; ++it) {
    const auto batch = toy_batch(p, T, per, 7, static_cast<std::uint64_t>(it));
    with += estimate_gradient(batch, 0.0, 0.0, true).intensity_bias / batches;
    without += estimate_gradient(batch, 0.0, 0.0, false).intensity_bias / batches;
  }
  const double analytic = std::exp(b) * T;
  CHECK(std::abs(with - without) <= 0.15 * analytic);
  CHECK(std::abs(without - analytic) <= 0.15 * analytic);
}

TEST_CASE("adam_step: zero gradient leaves parameters in place") {
  PolicyParams p = flat_policy(0.3, 5, 0.2);
  const PolicyParams snapshot = p;
  AdamState st = AdamState::init(p);
  adam_step(p, zeros_like(p), st, 0.05);
  std::vector<TensorConstView> a, b;
  const PolicyParams& frozen = p;
  for_each_tensor(frozen, [&](TensorConstView v) { a.push_back(v); });
  for_each_tensor(snapshot, [&](TensorConstView v) { b.push_back(v); });
  for (std::size_t k = 0; k < a.size(); ++k)
    for (Eigen::Index i = 0; i < a[k].size; ++i) CHECK(a[k].data[i] == b[k].data[i]);
}

TEST_CASE("adam_step: constant gradient moves monotonically along its sign") {
  PolicyParams p = flat_policy(0.0);
  PolicyParams g = zeros_like(p);
  g.intensity_bias = 0.7;
  AdamState st = AdamState::init(p);
  double prev = p.intensity_bias;
  for (int i = 0; i < 25; ++i) {
    adam_step(p, g, st, 0.01);
    CHECK(p.intensity_bias > prev);
    prev = p.intensity_bias;
  }
}

TEST_CASE("adam_step: matches a hand-stepped trace") {
  PolicyParams p = flat_policy(0.0);
  AdamState st = AdamState::init(p);
  const double lr = 0.02, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double theta = 0.0, m = 0.0, v = 0.0;
  for (int step = 1; step <= 6; ++step) {
    // ascent on the scalar quadratic -(theta - 1)^2 / 2
    const double g = 1.0 - theta;
    PolicyParams grad = zeros_like(p);
    grad.intensity_bias = g;
    adam_step(p, grad, st, lr, b1, b2, eps);
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    const double mh = m / (1.0 - std::pow(b1, step));
    const double vh = v / (1.0 - std::pow(b2, step));
    theta += lr * mh / (std::sqrt(vh) + eps);
    CHECK(p.intensity_bias == doctest::Approx(theta).epsilon(1e-12));
  }
}

TEST_CASE("adam_step: non-finite gradient aborts") {
  PolicyParams p = flat_policy(0.0);
  PolicyParams g = zeros_like(p);
  g.intensity_bias = std::numeric_limits<double>::quiet_NaN();
  AdamState st = AdamState::init(p);
  CHECK_THROWS_AS(adam_step(p, g, st, 0.01), numeric_error);
}

TEST_CASE("train: zero iterations return the parameters unchanged") {
  PolicyParams p = flat_policy(0.4, 3, 0.1);
  const PolicyParams before = p;
  CountingEnvironment env(1.0, CountingEnvironment::Reward::ActionCount);
  TrainConfig cfg;
  cfg.iterations = 0;
  const TrainingStats stats = train(env, p, cfg);
  CHECK(stats.iterations.empty());
  CHECK(l2_norm(p) == l2_norm(before));
  CHECK(p.intensity_bias == before.intensity_bias);
}

TEST_CASE("train: drives the rate toward the regularized optimum") {
  // reward = count, penalty q * int lambda^2: optimum lambda = 1 / (2q)
  const double q = 0.1, T = 2.0;  // optimum rate 5
  CountingEnvironment env(T, CountingEnvironment::Reward::ActionCount);
  PolicyParams p = init_params({2, 2, 0, 0, false}, 21, 0.05, 1.0);
  TrainConfig cfg;
  cfg.iterations = 400;
  cfg.batch_episodes = 8;
  cfg.lr = {0.05, 1e-3};
  cfg.q_intensity = q;
  cfg.seed = 77;
  train(env, p, cfg);
  const EvalResult ev = evaluate(env, policy_source_factory(p), 400, 123);
  const double rate = ev.action_summary().mean / T;
  CHECK(std::abs(rate - 5.0) <= 0.25 * 5.0);
}

TEST_CASE("train: bit-identical stats from the same seed, any thread count") {
  auto run = [&](int threads) {
    CountingEnvironment env(1.5, CountingEnvironment::Reward::ActionCount);
    PolicyParams p = init_params({2, 2, 0, 0, false}, 9, 0.1, 1.2);
    TrainConfig cfg;
    cfg.iterations = 12;
    cfg.batch_episodes = 6;
    cfg.q_intensity = 0.05;
    cfg.seed = 1234;
    cfg.threads = threads;
    return train(env, p, cfg);
  };
  const TrainingStats s1 = run(1);
  const TrainingStats s2 = run(1);
  const TrainingStats s4 = run(4);
  REQUIRE(s1.iterations.size() == s2.iterations.size());
  REQUIRE(s1.iterations.size() == s4.iterations.size());
  for (std::size_t i = 0; i < s1.iterations.size(); ++i) {
    CHECK(s1.iterations[i].mean_reward == s2.iterations[i].mean_reward);
    CHECK(s1.iterations[i].grad_norm == s2.iterations[i].grad_norm);
    CHECK(s1.iterations[i].mean_reward == s4.iterations[i].mean_reward);
    CHECK(s1.iterations[i].grad_norm == s4.iterations[i].grad_norm);
    CHECK(s1.iterations[i].penalized_objective == s4.iterations[i].penalized_objective);
  }
}

TEST_CASE("evaluate: one episode reports that episode exactly") {
  CountingEnvironment env(2.0, CountingEnvironment::Reward::ActionCount);
  const PolicyParams p = flat_policy(std::log(2.0));
  const EvalResult ev = evaluate(env, policy_source_factory(p), 1, 55);
  REQUIRE(ev.rewards.size() == 1);
  CHECK(ev.reward_summary().mean == ev.rewards[0]);
  CHECK(ev.rewards[0] == ev.action_counts[0]);  // reward is the count
}

TEST_CASE("evaluate: standard error shrinks with the square root of the sample") {
  CountingEnvironment env(2.0, CountingEnvironment::Reward::ActionCount);
  const PolicyParams p = flat_policy(std::log(1.5));
  const auto small = evaluate(env, policy_source_factory(p), 400, 2001);
  const auto large = evaluate(env, policy_source_factory(p), 1600, 2001);
  const double se_small = small.reward_summary().stddev / std::sqrt(400.0);
  const double se_large = large.reward_summary().stddev / std::sqrt(1600.0);
  CHECK(se_small / se_large == doctest::Approx(2.0).epsilon(0.25));
}
