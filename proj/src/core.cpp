#include "mtpp/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mtpp/errors.hpp"

namespace mtpp {

EpisodeHistory::EpisodeHistory(double horizon) : horizon_(horizon) {
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    throw precondition_error("EpisodeHistory: horizon must be positive and finite");
}

void EpisodeHistory::append(Event e) {
  if (!std::isfinite(e.time) || e.time < 0.0 || e.time > horizon_)
    throw precondition_error("EpisodeHistory::append: time outside [0, horizon]");
  if (!events_.empty() && e.time <= events_.back().time)
    throw precondition_error("EpisodeHistory::append: event times must strictly increase");
  if (e.kind == EventKind::Action) ++action_count_;
  events_.push_back(e);
}

double EpisodeHistory::append_nudged(Event e) {
  if (!std::isfinite(e.time) || e.time < 0.0)
    throw precondition_error("EpisodeHistory::append_nudged: bad event time");
  if (!events_.empty() && e.time <= events_.back().time) {
    e.time = events_.back().time + kTieNudge;
    ++nudge_count_;
  }
  if (e.time > horizon_) return -1.0;  // nudged past the horizon: dropped
  if (e.kind == EventKind::Action) ++action_count_;
  events_.push_back(e);
  return e.time;
}

double IntensitySegment::value_at(double t) const { return c * std::exp(w * (t - t_ref)); }

double segment_compensator(const IntensitySegment& seg, double t0, double t1) {
  if (t1 < t0 || t0 < seg.t_ref)
    throw precondition_error("segment_compensator: requires t_ref <= t0 <= t1");
  if (seg.c < 0.0) throw precondition_error("segment_compensator: c must be >= 0");
  const double delta = t1 - t0;
  if (delta == 0.0 || seg.c == 0.0) return 0.0;
  const double head = seg.c * std::exp(seg.w * (t0 - seg.t_ref));
  const double wd = seg.w * delta;
  if (std::abs(wd) < 1e-8) return head * delta * (1.0 + 0.5 * wd);
  return head * std::expm1(wd) / seg.w;
}

bool MarkPmf::valid(double tol) const {
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || p > 1.0 + tol) return false;
    sum += p;
  }
  return std::abs(sum - 1.0) <= tol;
}

void IntensityTrajectory::validate(double horizon) const {
  if (segments.empty() || boundaries.size() != segments.size() + 1)
    throw data_error("IntensityTrajectory: boundaries must bracket every segment");
  if (boundaries.front() != 0.0 || std::abs(boundaries.back() - horizon) > 1e-12)
    throw data_error("IntensityTrajectory: must cover [0, horizon]");
  for (std::size_t k = 0; k + 1 < boundaries.size(); ++k) {
    if (boundaries[k + 1] < boundaries[k])
      throw data_error("IntensityTrajectory: boundaries must be nondecreasing");
    if (segments[k].t_ref > boundaries[k])
      throw data_error("IntensityTrajectory: segment t_ref after its interval start");
  }
}

double IntensityTrajectory::compensator() const {
  double total = 0.0;
  for (std::size_t k = 0; k < segments.size(); ++k)
    total += segment_compensator(segments[k], boundaries[k], boundaries[k + 1]);
  return total;
}

double IntensityTrajectory::value_at(double t) const {
  // Internal boundaries evaluate with the segment on the left: the intensity
  // at an event time is its limit from below, which is what the likelihood
  // product uses.
  auto it = std::lower_bound(boundaries.begin() + 1, boundaries.end(), t);
  if (it == boundaries.end()) throw data_error("IntensityTrajectory: time beyond coverage");
  const std::size_t k = static_cast<std::size_t>(it - boundaries.begin()) - 1;
  return segments[k].value_at(t);
}

double episode_log_likelihood(const EpisodeHistory& history,
                              const IntensityTrajectory& trajectory,
                              const std::vector<MarkPmf>* mark_pmfs) {
  trajectory.validate(history.horizon());
  double ll = -trajectory.compensator();
  std::size_t action_index = 0;
  for (const Event& e : history.events()) {
    if (e.kind != EventKind::Action) continue;
    if (e.time < 0.0 || e.time > history.horizon())
      throw data_error("episode_log_likelihood: action outside coverage");
    const double lam = trajectory.value_at(e.time);
    if (!(lam > 0.0)) {
      std::ostringstream msg;
      msg << "episode_log_likelihood: nonpositive intensity " << lam << " at action time "
          << e.time;
      throw data_error(msg.str());
    }
    ll += std::log(lam);
    if (mark_pmfs != nullptr) {
      if (action_index >= mark_pmfs->size())
        throw data_error("episode_log_likelihood: fewer mark pmfs than actions");
      const MarkPmf& pmf = (*mark_pmfs)[action_index];
      if (e.mark < 0 || static_cast<std::size_t>(e.mark) >= pmf.probs.size())
        throw data_error("episode_log_likelihood: action mark outside pmf support");
      const double p = pmf.probs[static_cast<std::size_t>(e.mark)];
      ll += p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
    }
    ++action_index;
  }
  if (mark_pmfs != nullptr && action_index != mark_pmfs->size())
    throw data_error("episode_log_likelihood: more mark pmfs than actions");
  return ll;
}

}  // namespace mtpp
