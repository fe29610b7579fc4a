#ifndef MTPP_ENV_TOY_HPP
#define MTPP_ENV_TOY_HPP

#include "mtpp/episode.hpp"

namespace mtpp {

// Feedback-free environment whose reward depends only on the action count.
// The closed-form optima make it the calibration target for the estimator
// and regularizer tests.
class CountingEnvironment final : public Environment {
 public:
  enum class Reward { ActionCount, NegSquaredError };

  CountingEnvironment(double horizon, Reward kind, double target_count = 0.0)
      : horizon_(horizon), kind_(kind), target_(target_count) {}

  double horizon() const override { return horizon_; }
  int action_mark_count() const override { return 0; }
  int feedback_mark_count() const override { return 0; }
  void reset(const EpisodeKeys&) override {}
  std::optional<Event> peek_feedback() override { return std::nullopt; }
  void consume_feedback(const Event&) override {}
  std::vector<Event> apply_action(const Event&) override { return {}; }
  double terminal_reward(const EpisodeHistory& history) override {
    const double n = static_cast<double>(history.action_count());
    if (kind_ == Reward::ActionCount) return n;
    return -(n - target_) * (n - target_);
  }
  std::unique_ptr<Environment> clone() const override {
    return std::make_unique<CountingEnvironment>(horizon_, kind_, target_);
  }

 private:
  double horizon_;
  Reward kind_;
  double target_;
};

}  // namespace mtpp

#endif
