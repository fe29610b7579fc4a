#include "mtpp/diagnostics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "mtpp/errors.hpp"

namespace mtpp {

std::size_t ScriptedIntensity::index(double t) const {
  std::size_t i = 0;
  while (i + 1 < knots.size() && t >= knots[i + 1]) ++i;
  return i;
}

double ScriptedIntensity::value(double t) const { return segs[index(t)].value_at(t); }

double ScriptedIntensity::compensator(double t) const {
  double total = 0.0;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const double a = knots[i];
    if (t <= a) break;
    const double b = i + 1 < knots.size() ? std::min(knots[i + 1], t) : t;
    total += segment_compensator(segs[i], a, b);
  }
  return total;
}

double ScriptedIntensity::cdf(double t) const { return -std::expm1(-compensator(t)); }

IntensitySegment ScriptPolicyView::segment_at(double t) {
  const auto& seg = script_->segs[script_->index(t)];
  return {seg.value_at(t), seg.w, t};
}

std::optional<Event> ScriptFeed::peek_after(double) {
  if (cursor_ >= script_->knots.size()) return std::nullopt;
  return Event{script_->knots[cursor_], EventKind::Feedback, Event::kNoMark};
}

Event ScriptFeed::consume(const Event& e) {
  ++cursor_;
  return e;
}

double scripted_first_arrival(const ScriptedIntensity& script, RandomStream& rng,
                              double horizon) {
  ScriptPolicyView policy(script);
  ScriptFeed feed(script);
  const SampleOutcome out = next_action(policy, feed, 0.0, horizon, rng);
  return out.is_time() ? out.time : horizon;
}

double thinning_first_arrival(const ScriptedIntensity& script, RandomStream& rng,
                              double t_limit) {
  double t = 0.0;
  while (t < t_limit) {
    const std::size_t i = script.index(t);
    const double seg_end = i + 1 < script.knots.size() ? script.knots[i + 1] : t_limit;
    const double chunk_end = std::min(seg_end, t + 1.0);
    const double bound =
        std::max(script.segs[i].value_at(t), script.segs[i].value_at(chunk_end));
    if (bound <= 0.0) {
      t = chunk_end;
      continue;
    }
    const double step = rng.next_exponential(bound);
    if (t + step >= chunk_end) {
      t = chunk_end;
      continue;
    }
    t += step;
    if (rng.next_unit() * bound <= script.value(t)) return t;
  }
  return t_limit;
}

double ks_against_cdf(std::vector<double> samples,
                      const std::function<double(double)>& cdf) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
    d = std::max(d, std::abs(static_cast<double>(i) / n - f));
  }
  return d;
}

double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j])
      ++i;
    else
      ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / static_cast<double>(a.size()) -
                             static_cast<double>(j) / static_cast<double>(b.size())));
  }
  return d;
}

std::vector<SamplerCheckResult> sampler_distribution_check(int samples,
                                                           std::uint64_t seed) {
  struct Case {
    const char* name;
    ScriptedIntensity script;
  };
  const std::array<Case, 3> cases = {
      Case{"one-segment growing", {{0.0}, {IntensitySegment{0.8, 0.5, 0.0}}}},
      Case{"two-segment mid-interval rebase",
           {{0.0, 0.5},
            {IntensitySegment{0.5, 0.0, 0.0}, IntensitySegment{3.0, 0.0, 0.5}}}},
      Case{"three-segment extinction then rescue",
           {{0.0, 1.5, 3.0},
            {IntensitySegment{0.8, -2.0, 0.0}, IntensitySegment{2.0, 0.1, 1.5},
             IntensitySegment{1.0, 0.0, 3.0}}}},
  };
  std::vector<SamplerCheckResult> out;
  std::uint64_t salt = 0;
  for (const Case& c : cases) {
    std::vector<double> inverse, thinned;
    inverse.reserve(static_cast<std::size_t>(samples));
    thinned.reserve(static_cast<std::size_t>(samples));
    for (int i = 0; i < samples; ++i) {
      RandomStream r1(derive_key(seed, salt, static_cast<std::uint64_t>(i), 1));
      RandomStream r2(derive_key(seed, salt, static_cast<std::uint64_t>(i), 2));
      inverse.push_back(scripted_first_arrival(c.script, r1));
      thinned.push_back(thinning_first_arrival(c.script, r2));
    }
    SamplerCheckResult res;
    res.name = c.name;
    res.ks_analytic =
        ks_against_cdf(inverse, [&](double t) { return c.script.cdf(t); });
    res.ks_thinning = ks_two_sample(inverse, thinned);
    out.push_back(std::move(res));
    ++salt;
  }
  return out;
}

FdReport finite_difference_check(PolicyParams params, const EpisodeHistory& history,
                                 const RegularizerSpec& spec, double step) {
  const GradientBundle base = episode_backward(params, history, spec);
  const PolicyParams* grads[3] = {&base.d_log_prob, &base.d_intensity_sq,
                                  &base.d_mark_entropy};
  const bool active[3] = {true, spec.intensity_sq,
                          spec.mark_entropy && params.dims.action_marks > 0};
  auto values = [&](const GradientBundle& b) {
    return std::array<double, 3>{b.log_prob, b.intensity_sq_integral,
                                 b.mark_entropy_integral};
  };

  std::vector<TensorView> pv;
  for_each_tensor(params, [&](TensorView v) { pv.push_back(v); });
  std::array<std::vector<TensorConstView>, 3> gv;
  for (int k = 0; k < 3; ++k)
    for_each_tensor(*grads[k], [&](TensorConstView v) {
      gv[static_cast<std::size_t>(k)].push_back(v);
    });

  FdReport report;
  for (std::size_t tv = 0; tv < pv.size(); ++tv) {
    for (Eigen::Index i = 0; i < pv[tv].size; ++i) {
      const double orig = pv[tv].data[i];
      pv[tv].data[i] = orig + step;
      const auto up = values(episode_backward(params, history, spec));
      pv[tv].data[i] = orig - step;
      const auto down = values(episode_backward(params, history, spec));
      pv[tv].data[i] = orig;
      for (int k = 0; k < 3; ++k) {
        if (!active[k]) continue;
        const double fd =
            (up[static_cast<std::size_t>(k)] - down[static_cast<std::size_t>(k)]) /
            (2.0 * step);
        const double g = gv[static_cast<std::size_t>(k)][tv].data[i];
        const double rel = std::abs(g - fd) / std::max(1.0, std::abs(fd));
        if (rel > report.max_rel_err) {
          report.max_rel_err = rel;
          report.worst_tensor = pv[tv].name;
        }
      }
    }
  }
  return report;
}

RandomEpisodeCase random_episode_case(std::uint64_t seed, bool marks, bool freeze) {
  RandomStream rng(derive_key(seed, 0xFDC5, marks ? 1 : 0, freeze ? 1 : 0));
  PolicyDims dims;
  dims.input_dim = 3;
  dims.hidden_dim = 3;
  dims.action_marks = marks ? 3 : 0;
  dims.feedback_marks = marks ? 4 : 0;
  dims.freeze_time_slope = freeze;
  PolicyParams params =
      init_params(dims, rng.next_u64(), 0.4, std::exp(rng.next_uniform(-0.5, 0.5)));

  const double T = 2.0;
  EpisodeHistory history(T);
  const int n = rng.next_index(10) + 1;
  std::vector<double> times;
  for (int i = 0; i < n; ++i) times.push_back(rng.next_uniform(0.05, T - 0.05));
  std::sort(times.begin(), times.end());
  for (int i = 0; i < n; ++i) {
    const bool action = rng.next_bernoulli(0.6);
    Event e;
    e.time = times[static_cast<std::size_t>(i)];
    e.kind = action ? EventKind::Action : EventKind::Feedback;
    if (marks)
      e.mark = action ? rng.next_index(dims.action_marks) : rng.next_index(dims.feedback_marks);
    if (history.append_nudged(e) < 0.0) break;
  }
  return {std::move(params), std::move(history)};
}

}  // namespace mtpp
