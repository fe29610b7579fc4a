#ifndef MTPP_ENV_MEMORY_HPP
#define MTPP_ENV_MEMORY_HPP

#include <optional>
#include <string>
#include <vector>

#include "mtpp/episode.hpp"

namespace mtpp {

// One study item with its inherent difficulty: the forgetting rate right
// after the first review, per unit time.
struct Item {
  int id = 0;
  double initial_rate = 0.1;
};

struct MemoryConfig {
  double recall_discount = 0.5;  // rate multiplier is (1 - this) on a successful recall
  double forget_penalty = 0.2;   // rate multiplier is (1 + this) on a failed recall
  std::vector<Item> items;
  double horizon = 14.0;         // study window (days)
  double test_delay = 1.0;       // test happens this long after the study window
};

// Difficulty drawn log-uniform over [rate_min, rate_max]; deterministic by seed.
std::vector<Item> synth_items(int count, double rate_min, double rate_max,
                              std::uint64_t seed);
// "id,n0" per line.
std::vector<Item> load_items(const std::string& path);
void save_items(const std::string& path, const std::vector<Item>& items);

// Exponential-forgetting student: recall probability decays from each review
// at the item's current rate; the rate shrinks on recall, grows on a failure.
class StudentState {
 public:
  explicit StudentState(const MemoryConfig* cfg);

  // exp(-rate * (t - last_review)); 0 for an item never reviewed.
  double recall_prob(int item, double t) const;

  struct ReviewOutcome {
    bool recalled = false;
    double prob = 0.0;
  };
  // Samples the recall, updates the forgetting rate and the review time.
  ReviewOutcome review(int item, double t, RandomStream& rng);

  double rate(int item) const { return rate_.at(static_cast<std::size_t>(item)); }
  std::optional<double> last_review(int item) const {
    return last_review_.at(static_cast<std::size_t>(item));
  }
  int item_count() const { return static_cast<int>(rate_.size()); }

 private:
  const MemoryConfig* cfg_;
  std::vector<double> rate_;
  std::vector<std::optional<double>> last_review_;
};

// Fraction of items recalled in a sampled test at horizon + test_delay.
double episode_reward(const StudentState& student, const MemoryConfig& cfg,
                      RandomStream& rng);

// Feedback marks encode (item, recalled): mark = item * 2 + recalled.
inline int encode_review_mark(int item, bool recalled) { return item * 2 + (recalled ? 1 : 0); }
inline int review_mark_item(int mark) { return mark / 2; }
inline bool review_mark_recalled(int mark) { return (mark % 2) != 0; }

// Teaching environment: every agent action "review item y" triggers the
// student's recall feedback at the same instant, and the reward is the
// sampled recall over all items at test time.
class MemoryEnvironment final : public Environment {
 public:
  explicit MemoryEnvironment(MemoryConfig cfg);

  double horizon() const override { return cfg_.horizon; }
  int action_mark_count() const override { return static_cast<int>(cfg_.items.size()); }
  int feedback_mark_count() const override { return 2 * static_cast<int>(cfg_.items.size()); }
  void reset(const EpisodeKeys& keys) override;
  std::optional<Event> peek_feedback() override { return std::nullopt; }
  void consume_feedback(const Event&) override {}
  std::vector<Event> apply_action(const Event& action) override;
  double terminal_reward(const EpisodeHistory& history) override;
  std::unique_ptr<Environment> clone() const override;

  const MemoryConfig& config() const { return cfg_; }
  const StudentState& student() const { return student_; }  // true-model view

 private:
  MemoryConfig cfg_;
  StudentState student_;
  RandomStream env_rng_{0};
  RandomStream reward_rng_{0};
};

}  // namespace mtpp

#endif
