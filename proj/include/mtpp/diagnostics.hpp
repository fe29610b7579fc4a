#ifndef MTPP_DIAGNOSTICS_HPP
#define MTPP_DIAGNOSTICS_HPP

// Self-check machinery shipped with the toolkit: scripted intensities with
// exact CDFs, a thinning reference sampler (never the production path), KS
// statistics, and finite-difference verification of the episode gradients.

#include <functional>
#include <string>
#include <vector>

#include "mtpp/core.hpp"
#include "mtpp/policy.hpp"
#include "mtpp/rng.hpp"
#include "mtpp/sampler.hpp"

namespace mtpp {

// segs[i] applies on [knots[i], knots[i+1]), the last one to infinity;
// knots[0] must be 0.
struct ScriptedIntensity {
  std::vector<double> knots;
  std::vector<IntensitySegment> segs;

  std::size_t index(double t) const;
  double value(double t) const;
  double compensator(double t) const;
  double cdf(double t) const;
};

// Presents a scripted intensity to the sampler the way a live policy would:
// the active segment rebased at the query time, with each later segment
// revealed by a feedback event at its knot.
class ScriptPolicyView final : public PolicyView {
 public:
  explicit ScriptPolicyView(const ScriptedIntensity& script) : script_(&script) {}
  IntensitySegment segment_at(double t) override;

 private:
  const ScriptedIntensity* script_;
};

class ScriptFeed final : public FeedbackStream {
 public:
  explicit ScriptFeed(const ScriptedIntensity& script) : script_(&script) {}
  std::optional<Event> peek_after(double t) override;
  Event consume(const Event& e) override;

 private:
  const ScriptedIntensity* script_;
  std::size_t cursor_ = 1;  // knot 0 starts the episode, not a reveal
};

// One inverse-transform first arrival against the incrementally revealed
// script.
double scripted_first_arrival(const ScriptedIntensity& script, RandomStream& rng,
                              double horizon = 1e9);

// Reference first arrival by thinning, chunked so the dominating rate stays
// finite. Used only to cross-check the inverse-transform path.
double thinning_first_arrival(const ScriptedIntensity& script, RandomStream& rng,
                              double t_limit = 1e9);

double ks_against_cdf(std::vector<double> samples,
                      const std::function<double(double)>& cdf);
double ks_two_sample(std::vector<double> a, std::vector<double> b);

struct SamplerCheckResult {
  std::string name;
  double ks_analytic = 0.0;
  double ks_thinning = 0.0;
};

// The scripted battery: one-, two-, and three-segment intensities, the second
// forcing a mid-interval rebase and the third decaying into near-extinction
// before a rescue segment.
std::vector<SamplerCheckResult> sampler_distribution_check(int samples, std::uint64_t seed);

struct FdReport {
  double max_rel_err = 0.0;
  std::string worst_tensor;
};

// Central finite differences of (log-likelihood, intensity-squared integral,
// entropy integral) against the reverse-pass gradients, across every scalar
// parameter. Error is |grad - fd| / max(1, |fd|).
FdReport finite_difference_check(PolicyParams params, const EpisodeHistory& history,
                                 const RegularizerSpec& spec, double step = 1e-5);

// Random small policy + short event history for gradient checks.
struct RandomEpisodeCase {
  PolicyParams params;
  EpisodeHistory history;
};

RandomEpisodeCase random_episode_case(std::uint64_t seed, bool marks, bool freeze);

}  // namespace mtpp

#endif
