#ifndef MTPP_CORE_HPP
#define MTPP_CORE_HPP

#include <cstddef>
#include <vector>

namespace mtpp {

enum class EventKind { Action, Feedback };

// One event of a marked point process. `mark` is kNoMark when the event
// carries none (markless intensity-only settings).
struct Event {
  static constexpr int kNoMark = -1;

  double time = 0.0;
  EventKind kind = EventKind::Action;
  int mark = kNoMark;

  bool has_mark() const { return mark != kNoMark; }
};

// Time-ordered event log over [0, horizon]. Times must strictly increase;
// exact ties are either rejected (append) or nudged forward by kTieNudge in
// arrival order (append_nudged), keeping the process simple.
class EpisodeHistory {
 public:
  static constexpr double kTieNudge = 1e-9;

  explicit EpisodeHistory(double horizon);

  // Throws precondition_error on non-increasing time or time outside [0, T].
  void append(Event e);

  // Nudges a tying or out-of-order time to just past the last event and
  // returns the placed time, or a negative value if the nudge would cross
  // the horizon (the event is dropped).
  double append_nudged(Event e);

  const std::vector<Event>& events() const { return events_; }
  double horizon() const { return horizon_; }
  std::size_t size() const { return events_.size(); }
  std::size_t action_count() const { return action_count_; }
  std::size_t nudge_count() const { return nudge_count_; }
  double last_time() const { return events_.empty() ? 0.0 : events_.back().time; }

 private:
  std::vector<Event> events_;
  double horizon_;
  std::size_t action_count_ = 0;
  std::size_t nudge_count_ = 0;
};

// One piece of a piecewise-exponential intensity lambda(t) = c * exp(w * (t - t_ref)).
// c >= 0; c == 0 denotes a silent segment (schedulers that are momentarily off).
struct IntensitySegment {
  double c = 1.0;
  double w = 0.0;
  double t_ref = 0.0;

  double value_at(double t) const;
};

// Integral of the segment intensity over [t0, t1]. Requires t_ref <= t0 <= t1.
// Uses the series branch when |w * (t1 - t0)| < 1e-8 to avoid cancellation.
double segment_compensator(const IntensitySegment& seg, double t0, double t1);

// Discrete mark distribution; entries in [0, 1] summing to 1 within 1e-12.
struct MarkPmf {
  std::vector<double> probs;

  bool valid(double tol = 1e-12) const;
};

// Piecewise intensity over [0, T]: segments[k] covers [boundaries[k], boundaries[k+1]).
struct IntensityTrajectory {
  std::vector<double> boundaries;  // size segments.size() + 1; front 0, back T
  std::vector<IntensitySegment> segments;

  void validate(double horizon) const;  // throws data_error on bad coverage
  double compensator() const;           // integral of the full trajectory
  double value_at(double t) const;      // left-limit at internal boundaries
};

// Log-likelihood of the action events in `history` under the given intensity
// trajectory: sum_i [log lambda(t_i) + log pmf_i(mark_i)] - integral of lambda.
// `mark_pmfs` has one entry per action (in time order) or is nullptr in
// markless mode. A pmf entry of 0 at a realized mark yields -inf (a sentinel,
// not an error).
double episode_log_likelihood(const EpisodeHistory& history,
                              const IntensityTrajectory& trajectory,
                              const std::vector<MarkPmf>* mark_pmfs);

}  // namespace mtpp

#endif
