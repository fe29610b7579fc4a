#include "mtpp/sampler.hpp"

#include <cmath>
#include <limits>

#include "mtpp/errors.hpp"

namespace mtpp {

namespace {
// Below this |w| the segment is treated as homogeneous (division by w).
constexpr double kSlopeEps = 1e-9;
// Tolerance for the rebase consistency check; survival log-mass may land a
// hair above zero from compensator roundoff when the sample sits at s.
constexpr double kRebaseSlack = 1e-9;
}  // namespace

SamplerState SamplerState::from_uniform(double u, IntensitySegment seg) {
  if (!(u >= 0.0) || u >= 1.0)
    throw precondition_error("SamplerState: uniform draw must lie in [0, 1)");
  if (seg.c < 0.0) throw precondition_error("SamplerState: segment intensity must be >= 0");
  return SamplerState(std::log1p(-u), seg);
}

double SamplerState::u_effective() const { return -std::expm1(log_survival_); }

SampleOutcome invert_cdf(const SamplerState& state) {
  const IntensitySegment& seg = state.seg_;
  const double g = state.log_survival_;  // log(1 - u) <= 0
  if (g == 0.0) return SampleOutcome::at(seg.t_ref);
  if (seg.c == 0.0) return SampleOutcome::extinct();  // silent segment
  if (std::abs(seg.w) < kSlopeEps) return SampleOutcome::at(seg.t_ref - g / seg.c);
  const double m = -seg.w * g / seg.c;  // 1 + m is the inverse-CDF argument
  if (1.0 + m <= 0.0) return SampleOutcome::extinct();
  return SampleOutcome::at(seg.t_ref + std::log1p(m) / seg.w);
}

SamplerState rebase_on_feedback(const SamplerState& state, double s,
                                const IntensitySegment& new_seg) {
  if (s < state.seg_.t_ref)
    throw precondition_error("rebase_on_feedback: s before the current reference time");
  if (new_seg.t_ref != s)
    throw precondition_error("rebase_on_feedback: new segment must be rebased at s");
  // log(1 - u') = log(1 - u) - log Q, with Q the survival probability over
  // [t_ref, s] of the outgoing segment.
  double g = state.log_survival_ + segment_compensator(state.seg_, state.seg_.t_ref, s);
  if (g > kRebaseSlack)
    throw std::logic_error(
        "rebase_on_feedback: pending sample did not exceed the rebase time");
  if (g > 0.0) g = 0.0;
  return SamplerState(g, new_seg);
}

SampleOutcome next_action(PolicyView& policy, FeedbackStream& feedback, double t_now,
                          double horizon, RandomStream& uniforms) {
  if (!(t_now < horizon)) throw precondition_error("next_action: t_now must precede horizon");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  SamplerState state = SamplerState::from_uniform(uniforms.next_unit(), policy.segment_at(t_now));
  for (;;) {
    const SampleOutcome provisional = invert_cdf(state);
    const double t_prov = provisional.is_time() ? provisional.time : kInf;
    const double t_ref = state.segment().t_ref;
    std::optional<Event> pending = feedback.peek_after(t_ref);
    const double t_fb = pending ? pending->time : kInf;
    const std::optional<double> change = policy.next_change_after(t_ref);
    const double t_ch = change ? *change : kInf;
    if (std::min(t_fb, t_ch) < std::min(t_prov, horizon)) {
      if (t_ch <= t_fb) {
        // intensity changed without an event: rebase the same draw there
        state = rebase_on_feedback(state, t_ch, policy.segment_at(t_ch));
      } else {
        const Event delivered = feedback.consume(*pending);
        state = rebase_on_feedback(state, delivered.time, policy.segment_at(delivered.time));
      }
      continue;
    }
    if (provisional.is_time() && t_prov < horizon) return provisional;
    return SampleOutcome::extinct();  // no action before the horizon
  }
}

}  // namespace mtpp
