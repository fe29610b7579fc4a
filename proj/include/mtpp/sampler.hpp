#ifndef MTPP_SAMPLER_HPP
#define MTPP_SAMPLER_HPP

#include <optional>

#include "mtpp/core.hpp"
#include "mtpp/rng.hpp"

namespace mtpp {

// Result of inverting the next-arrival CDF: either a concrete time or
// extinction (the survival function does not reach the drawn quantile, so no
// event occurs under the current segment extended to infinity).
struct SampleOutcome {
  static SampleOutcome at(double t) { return {t, true}; }
  static SampleOutcome extinct() { return {0.0, false}; }

  double time = 0.0;
  bool finite = false;

  bool is_time() const { return finite; }
};

// The retained uniform draw and the segment it is being inverted against.
// The draw is stored as log-survival g = log(1 - u_effective); a rebase then
// just adds the elapsed compensator to g, which stays exact deep in the tail
// where 1 - u would round to zero.
class SamplerState {
 public:
  static SamplerState from_uniform(double u, IntensitySegment seg);

  double u_effective() const;
  double log_survival() const { return log_survival_; }
  const IntensitySegment& segment() const { return seg_; }

  friend SampleOutcome invert_cdf(const SamplerState& state);
  friend SamplerState rebase_on_feedback(const SamplerState& state, double s,
                                         const IntensitySegment& new_seg);

 private:
  SamplerState(double log_survival, IntensitySegment seg)
      : log_survival_(log_survival), seg_(seg) {}

  double log_survival_;  // log(1 - u_effective), <= 0
  IntensitySegment seg_;
};

// Inverse-transform sample of the next arrival from the current segment.
SampleOutcome invert_cdf(const SamplerState& state);

// Accounts for the intensity changing at time s >= t_ref before the pending
// sample fired: the draw is conditioned on survival over [t_ref, s] and the
// segment replaced by new_seg (which must have t_ref == s). Throws if the
// pending sample could not have exceeded s.
SamplerState rebase_on_feedback(const SamplerState& state, double s,
                                const IntensitySegment& new_seg);

// The acting policy as the sampler sees it: a fresh segment rebased at any
// query time, after the policy has ingested everything delivered so far.
// Policies whose intensity changes between events (e.g. a rank-driven
// scheduler on a dwell-limited feed) announce those instants via
// next_change_after so the pending draw is rebased there too.
class PolicyView {
 public:
  virtual ~PolicyView() = default;
  virtual IntensitySegment segment_at(double t) = 0;
  virtual std::optional<double> next_change_after(double) { return std::nullopt; }
};

// Scheduled environment feedback, revealed incrementally. consume() must
// deliver the event to whoever tracks history/policy state and may return a
// tie-nudged copy; the returned event's time is where the sampler rebases.
class FeedbackStream {
 public:
  virtual ~FeedbackStream() = default;
  virtual std::optional<Event> peek_after(double t) = 0;
  virtual Event consume(const Event& e) = 0;
};

// Draws the time of the next action after t_now. Consumes exactly one
// uniform; every feedback event arriving before the provisional sample
// rebases the same draw. Returns Extinct when no action occurs before the
// horizon (including samples landing at or past it).
SampleOutcome next_action(PolicyView& policy, FeedbackStream& feedback, double t_now,
                          double horizon, RandomStream& uniforms);

}  // namespace mtpp

#endif
