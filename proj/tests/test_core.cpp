#include <doctest.h>

#include <cmath>
#include <limits>

#include "mtpp/core.hpp"
#include "mtpp/errors.hpp"
#include "oracles.hpp"

using namespace mtpp;

TEST_CASE("segment compensator: homogeneous rate times duration") {
  CHECK(segment_compensator({2.0, 0.0, 0.0}, 0.0, 3.0) == 6.0);
}

TEST_CASE("segment compensator: unit exponential slope matches quadrature") {
  const IntensitySegment seg{1.0, 1.0, 0.0};
  const double got = segment_compensator(seg, 0.0, 1.0);
  CHECK(got == doctest::Approx(std::exp(1.0) - 1.0).epsilon(1e-12));
  const double quad =
      oracles::integrate([&](double t) { return seg.value_at(t); }, 0.0, 1.0);
  CHECK(std::abs(got - quad) <= 1e-10 * std::max(1.0, std::abs(quad)));
}

TEST_CASE("segment compensator: empty interval is zero") {
  CHECK(segment_compensator({5.0, -2.0, 1.0}, 4.0, 4.0) == 0.0);
}

TEST_CASE("segment compensator: precondition violations") {
  CHECK_THROWS_AS(segment_compensator({1.0, 0.0, 0.0}, 2.0, 1.0), precondition_error);
  CHECK_THROWS_AS(segment_compensator({1.0, 0.0, 1.0}, 0.5, 2.0), precondition_error);
}

TEST_CASE("segment compensator: small-slope branch agrees with quadrature") {
  for (double w : {0.0, 1e-12, -1e-12, 1e-9, -5e-10}) {
    const IntensitySegment seg{1.7, w, 0.0};
    const double got = segment_compensator(seg, 0.5, 2.5);
    const double quad =
        oracles::integrate([&](double t) { return seg.value_at(t); }, 0.5, 2.5);
    CHECK(std::abs(got - quad) <= 1e-10 * std::abs(quad));
  }
}

TEST_CASE("segment compensator: additive over adjacent intervals") {
  RandomStream rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const IntensitySegment seg{std::exp(rng.next_uniform(-2.0, 2.0)),
                               rng.next_uniform(-3.0, 3.0), rng.next_uniform(0.0, 2.0)};
    const double t0 = seg.t_ref + rng.next_uniform(0.0, 1.0);
    const double t1 = t0 + rng.next_uniform(0.0, 4.0);
    const double m = t0 + rng.next_unit() * (t1 - t0);
    const double whole = segment_compensator(seg, t0, t1);
    const double split =
        segment_compensator(seg, t0, m) + segment_compensator(seg, m, t1);
    CHECK(std::abs(whole - split) <= 1e-10 * std::max(1.0, std::abs(whole)));
  }
}

TEST_CASE("segment compensator: positive and monotone in the right endpoint") {
  const IntensitySegment seg{0.7, -1.3, 0.0};
  double prev = 0.0;
  for (double t1 = 0.25; t1 <= 5.0; t1 += 0.25) {
    const double v = segment_compensator(seg, 0.0, t1);
    CHECK(v > prev);
    prev = v;
  }
}

TEST_CASE("episode history: strict ordering and horizon") {
  EpisodeHistory h(2.0);
  h.append({0.5, EventKind::Action, Event::kNoMark});
  CHECK_THROWS_AS(h.append({0.5, EventKind::Feedback, Event::kNoMark}), precondition_error);
  CHECK_THROWS_AS(h.append({2.5, EventKind::Action, Event::kNoMark}), precondition_error);
  const double placed = h.append_nudged({0.5, EventKind::Feedback, Event::kNoMark});
  CHECK(placed == 0.5 + EpisodeHistory::kTieNudge);
  CHECK(h.nudge_count() == 1);
  CHECK(h.size() == 2);
  CHECK(h.action_count() == 1);
}

TEST_CASE("log-likelihood: empty history is minus the compensator") {
  EpisodeHistory h(2.0);
  IntensityTrajectory traj{{0.0, 2.0}, {IntensitySegment{1.0, 0.0, 0.0}}};
  CHECK(episode_log_likelihood(h, traj, nullptr) == doctest::Approx(-2.0).epsilon(1e-15));
}

TEST_CASE("log-likelihood: one action at unit rate") {
  EpisodeHistory h(2.0);
  h.append({1.0, EventKind::Action, Event::kNoMark});
  IntensityTrajectory traj{{0.0, 1.0, 2.0},
                           {IntensitySegment{1.0, 0.0, 0.0}, IntensitySegment{1.0, 0.0, 1.0}}};
  CHECK(episode_log_likelihood(h, traj, nullptr) == doctest::Approx(-2.0).epsilon(1e-15));
}

TEST_CASE("log-likelihood: mark term and quadrature cross-check") {
  EpisodeHistory h(2.0);
  h.append({1.0, EventKind::Action, 2});
  IntensityTrajectory traj{{0.0, 1.0, 2.0},
                           {IntensitySegment{1.0, 0.0, 0.0}, IntensitySegment{1.0, 0.0, 1.0}}};
  std::vector<MarkPmf> pmfs{MarkPmf{{0.25, 0.25, 0.25, 0.25}}};
  const double got = episode_log_likelihood(h, traj, &pmfs);
  CHECK(got == doctest::Approx(-2.0 + std::log(0.25)).epsilon(1e-12));
  double quad = 0.0;
  for (std::size_t k = 0; k < traj.segments.size(); ++k)
    quad += oracles::integrate([&](double t) { return traj.segments[k].value_at(t); },
                               traj.boundaries[k], traj.boundaries[k + 1]);
  CHECK(got == doctest::Approx(std::log(1.0) + std::log(0.25) - quad).epsilon(1e-10));
}

TEST_CASE("log-likelihood: zero-probability mark yields -inf, not an error") {
  EpisodeHistory h(1.0);
  h.append({0.5, EventKind::Action, 0});
  IntensityTrajectory traj{{0.0, 0.5, 1.0},
                           {IntensitySegment{1.0, 0.0, 0.0}, IntensitySegment{1.0, 0.0, 0.5}}};
  std::vector<MarkPmf> pmfs{MarkPmf{{0.0, 1.0}}};
  CHECK(episode_log_likelihood(h, traj, &pmfs) ==
        -std::numeric_limits<double>::infinity());
}

TEST_CASE("log-likelihood: coverage errors") {
  EpisodeHistory h(2.0);
  h.append({1.0, EventKind::Action, Event::kNoMark});
  IntensityTrajectory bad{{0.0, 1.5}, {IntensitySegment{1.0, 0.0, 0.0}}};
  CHECK_THROWS_AS(episode_log_likelihood(h, bad, nullptr), data_error);
}

TEST_CASE("mark pmf validity") {
  CHECK(MarkPmf{{0.5, 0.5}}.valid());
  CHECK(MarkPmf{{0.5, 0.4}}.valid() == false);
  CHECK(MarkPmf{{1.5, -0.5}}.valid() == false);
}

TEST_CASE("zero-event probability mass matches the survival factor") {
  // one fixed segment with compensator below 3; 1e5 sampled first arrivals
  const oracles::ScriptedIntensity script{{0.0}, {IntensitySegment{0.8, 0.3, 0.0}}};
  const double T = 2.0;
  const double mass = std::exp(-script.compensator(T));
  const int n = 100000;
  int zero_events = 0;
  for (int i = 0; i < n; ++i) {
    RandomStream rng(derive_key(2024, 7, static_cast<std::uint64_t>(i), 0));
    if (oracles::scripted_first_arrival(script, rng) >= T) ++zero_events;
  }
  const double p_hat = static_cast<double>(zero_events) / n;
  const double se = std::sqrt(mass * (1.0 - mass) / n);
  CHECK(std::abs(p_hat - mass) <= 3.0 * se);
}
