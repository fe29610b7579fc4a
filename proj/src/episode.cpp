#include "mtpp/episode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mtpp/errors.hpp"

namespace mtpp {

IntensitySegment ActionSource::segment_at(double) {
  throw std::logic_error("ActionSource: segment mechanism not implemented");
}
std::optional<double> ActionSource::next_change_after(double) { return std::nullopt; }
double ActionSource::intensity_at(double) const {
  throw std::logic_error("ActionSource: pointwise intensity not implemented");
}
double ActionSource::intensity_bound(double, double) const {
  throw std::logic_error("ActionSource: intensity bound not implemented");
}
int ActionSource::sample_mark(RandomStream&, double) {
  throw std::logic_error("ActionSource: mark sampling not implemented");
}

PolicySource::PolicySource(const PolicyParams& params) : params_(&params) {
  state_ = initial_state(params);
}

void PolicySource::begin_episode(const EpisodeKeys&) {
  state_ = initial_state(*params_);
  prev_time_ = 0.0;
}

void PolicySource::observe(const Event& e) {
  state_ = step_hidden(*params_, state_, e, prev_time_);
  prev_time_ = e.time;
}

IntensitySegment PolicySource::segment_at(double t) {
  return intensity_segment(*params_, state_, t);
}

int PolicySource::sample_mark(RandomStream& rng, double) {
  const MarkPmf pmf = mark_pmf(*params_, state_);
  const double u = rng.next_unit();
  double cum = 0.0;
  for (std::size_t i = 0; i < pmf.probs.size(); ++i) {
    cum += pmf.probs[i];
    if (u < cum) return static_cast<int>(i);
  }
  return static_cast<int>(pmf.probs.size()) - 1;
}

SourceFactory policy_source_factory(const PolicyParams& params) {
  return [&params](Environment&) { return std::make_unique<PolicySource>(params); };
}

namespace {

// Bridges the environment and the running history into the sampler's view of
// the world: consuming a scheduled feedback event appends it (tie-nudged),
// advances the environment cursor, and updates the acting source.
class DriverFeed final : public FeedbackStream {
 public:
  DriverFeed(Environment& env, EpisodeHistory& history, ActionSource& source)
      : env_(env), history_(history), source_(source) {}

  std::optional<Event> peek_after(double) override { return env_.peek_feedback(); }

  Event consume(const Event& e) override {
    Event placed = e;
    const double t = history_.append_nudged(e);
    if (t < 0.0) {
      // nudged past the horizon; drop from the log but keep cursors moving
      placed.time = history_.horizon();
      env_.consume_feedback(placed);
      return placed;
    }
    placed.time = t;
    env_.consume_feedback(placed);
    source_.observe(placed);
    return placed;
  }

 private:
  Environment& env_;
  EpisodeHistory& history_;
  ActionSource& source_;
};

class SourceView final : public PolicyView {
 public:
  explicit SourceView(ActionSource& s) : source_(s) {}
  IntensitySegment segment_at(double t) override { return source_.segment_at(t); }
  std::optional<double> next_change_after(double t) override {
    return source_.next_change_after(t);
  }

 private:
  ActionSource& source_;
};

void drain_feedback(DriverFeed& feed, double horizon) {
  for (;;) {
    auto f = feed.peek_after(0.0);
    if (!f || f->time >= horizon) return;
    feed.consume(*f);
  }
}

// Emits an action plus any same-instant feedback it triggers. Returns false
// when the action fell off the horizon after nudging.
bool deliver_action(Environment& env, ActionSource& source, EpisodeHistory& history,
                    Event action) {
  const double placed = history.append_nudged(action);
  if (placed < 0.0) return false;
  action.time = placed;
  source.observe(action);
  for (Event f : env.apply_action(action)) {
    const double t = history.append_nudged(f);
    if (t < 0.0) continue;  // same-instant feedback nudged past the horizon
    f.time = t;
    source.observe(f);
  }
  return true;
}

void run_segment_mode(Environment& env, ActionSource& source, EpisodeHistory& history,
                      RandomStream& action_rng, RandomStream& mark_rng) {
  const double T = env.horizon();
  DriverFeed feed(env, history, source);
  SourceView view(source);
  double t_now = 0.0;
  while (t_now < T) {
    const SampleOutcome next = next_action(view, feed, t_now, T, action_rng);
    if (!next.is_time()) break;
    Event action{next.time, EventKind::Action, Event::kNoMark};
    if (env.action_mark_count() > 0) action.mark = source.sample_mark(mark_rng, next.time);
    if (!deliver_action(env, source, history, action)) break;
    t_now = history.last_time();
  }
  drain_feedback(feed, T);
}

void run_thinning_mode(Environment& env, ActionSource& source, EpisodeHistory& history,
                       RandomStream& action_rng, RandomStream& mark_rng) {
  const double T = env.horizon();
  DriverFeed feed(env, history, source);
  double t_cursor = 0.0;
  while (t_cursor < T) {
    auto pending = feed.peek_after(t_cursor);
    const double cap = pending ? std::min(pending->time, T) : T;
    const double bound = source.intensity_bound(t_cursor, cap);
    if (bound <= 0.0) {
      t_cursor = cap;
    } else {
      t_cursor += action_rng.next_exponential(bound);
      if (t_cursor < cap &&
          action_rng.next_unit() * bound <= source.intensity_at(t_cursor)) {
        Event action{t_cursor, EventKind::Action, Event::kNoMark};
        if (env.action_mark_count() > 0) action.mark = source.sample_mark(mark_rng, t_cursor);
        if (!deliver_action(env, source, history, action)) break;
        t_cursor = history.last_time();
      }
      if (t_cursor < cap) continue;
    }
    if (cap >= T) break;
    t_cursor = feed.consume(*pending).time;  // reveal the scheduled feedback
  }
  drain_feedback(feed, T);
}

}  // namespace

EpisodeOutcome run_episode(Environment& env, ActionSource& source, const EpisodeKeys& keys) {
  env.reset(keys);
  source.begin_episode(keys);
  RandomStream action_rng(keys.stream(stream_role::kActionTimes));
  RandomStream mark_rng(keys.stream(stream_role::kMarks));
  EpisodeOutcome out{EpisodeHistory(env.horizon()), 0.0};
  if (source.mechanism() == SamplingMechanism::PiecewiseSegment)
    run_segment_mode(env, source, out.history, action_rng, mark_rng);
  else
    run_thinning_mode(env, source, out.history, action_rng, mark_rng);
  out.reward = env.terminal_reward(out.history);
  return out;
}

}  // namespace mtpp
