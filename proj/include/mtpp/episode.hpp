#ifndef MTPP_EPISODE_HPP
#define MTPP_EPISODE_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "mtpp/core.hpp"
#include "mtpp/policy.hpp"
#include "mtpp/rng.hpp"
#include "mtpp/sampler.hpp"

namespace mtpp {

// Identifies one rollout; every random stream in the episode is derived from
// these three values plus a role, so episodes are reproducible and
// independent regardless of execution order.
struct EpisodeKeys {
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;
  std::uint64_t episode = 0;

  std::uint64_t stream(std::uint64_t role) const {
    return derive_key(seed, iteration, episode * 8 + role, 0x6570u);
  }
};

// The black-box environment an episode runs against. Feedback is revealed two
// ways: scheduled events (peeked, then consumed in order) and immediate
// events triggered by an agent action. The terminal reward may be stochastic;
// it draws from the environment's own episode streams.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual double horizon() const = 0;
  virtual int action_mark_count() const = 0;    // 0 = the agent's actions carry no mark
  virtual int feedback_mark_count() const = 0;  // 0 = feedback carries no mark
  virtual void reset(const EpisodeKeys& keys) = 0;
  virtual std::optional<Event> peek_feedback() = 0;
  virtual void consume_feedback(const Event& delivered) = 0;
  virtual std::vector<Event> apply_action(const Event& action) = 0;
  virtual double terminal_reward(const EpisodeHistory& history) = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;
};

enum class SamplingMechanism {
  PiecewiseSegment,   // intensity is piecewise exponential between events
  GeneralIntensity,   // arbitrary intensity, sampled by thinning
};

// The acting entity of one episode: the learned policy or a reference
// scheduler. Sources observe every history event in order and expose their
// intensity either as a segment (inverse-transform path) or pointwise
// (thinning path).
class ActionSource {
 public:
  virtual ~ActionSource() = default;
  virtual SamplingMechanism mechanism() const { return SamplingMechanism::PiecewiseSegment; }
  virtual void begin_episode(const EpisodeKeys& keys) = 0;
  virtual void observe(const Event& e) = 0;
  virtual IntensitySegment segment_at(double t);              // segment mechanism
  virtual std::optional<double> next_change_after(double t);  // intensity change between events
  virtual double intensity_at(double t) const;                // thinning mechanism
  virtual double intensity_bound(double t0, double t1) const; // sup on [t0, t1]
  virtual int sample_mark(RandomStream& rng, double at_time); // marked envs only
};

// The recurrent policy driving an episode.
class PolicySource final : public ActionSource {
 public:
  explicit PolicySource(const PolicyParams& params);
  void begin_episode(const EpisodeKeys& keys) override;
  void observe(const Event& e) override;
  IntensitySegment segment_at(double t) override;
  int sample_mark(RandomStream& rng, double at_time) override;
  const HiddenState& state() const { return state_; }

 private:
  const PolicyParams* params_;
  HiddenState state_;
  double prev_time_ = 0.0;
};

struct EpisodeOutcome {
  EpisodeHistory history;
  double reward = 0.0;
};

// Rolls one full episode: interleaves sampled actions with environment
// feedback, keeps the history strictly ordered, and collects the terminal
// reward. Bit-reproducible from the keys.
EpisodeOutcome run_episode(Environment& env, ActionSource& source, const EpisodeKeys& keys);

using SourceFactory = std::function<std::unique_ptr<ActionSource>(Environment&)>;

// Factory for the learned policy (ignores the environment instance).
SourceFactory policy_source_factory(const PolicyParams& params);

}  // namespace mtpp

#endif
