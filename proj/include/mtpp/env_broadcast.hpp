#ifndef MTPP_ENV_BROADCAST_HPP
#define MTPP_ENV_BROADCAST_HPP

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mtpp/episode.hpp"

namespace mtpp {

enum class FeedSort { ReverseChrono, PriorityQueue };
enum class BroadcastReward { AvgRank, TimeAtTop };

struct ReplayRecord {
  double t = 0.0;
  std::string src;
};

// Competitor post log with its train/test split. Records sorted by time;
// exact ties are nudged apart at ingestion.
struct ReplayLog {
  std::vector<ReplayRecord> records;
  double train_begin = 0.0, train_end = 0.0;
  double test_begin = 0.0, test_end = 0.0;
};

// Sorts and de-ties records in place; returns the number of nudged ties.
std::size_t normalize_replay_records(std::vector<ReplayRecord>& records);

// Line-delimited JSON {"t": <real>, "src": <string>} plus a split manifest
// {"train": [t0, t1], "test": [t1, t2]}. Parsing is strict on field names.
std::vector<ReplayRecord> load_replay_records(const std::string& jsonl_path);
void save_replay_records(const std::string& jsonl_path,
                         const std::vector<ReplayRecord>& records);
ReplayLog load_replay_log(const std::string& jsonl_path, const std::string& manifest_path);
void save_split_manifest(const std::string& path, const ReplayLog& log);

struct SynthSource {
  std::string name;
  double rate = 1.0;        // homogeneous posting rate
  double burst_every = 0.0; // > 0 adds a scripted burst at this period
  int burst_size = 0;
};

// Synthetic competitor traffic over [0, span], split so the trailing
// test_span forms the test window. Deterministic by seed.
ReplayLog synth_competitors(const std::vector<SynthSource>& sources, double span,
                            double test_span, std::uint64_t seed);

// One follower wall over an episode: competitor posts plus the agent's posts,
// with the rank of the agent's newest post under either sorting rule. The
// agent starts holding one post at rank 0.
class FeedState {
 public:
  FeedState(FeedSort rule, double dwell, std::vector<double> source_priority,
            double agent_priority);

  void add_competitor_post(double t, int source);
  void add_agent_post(double t);

  // Posts by other users sitting above the agent's newest post at time t
  // (right-continuous), under the active rule.
  int rank(double t) const;
  // The reverse-chronological flavor regardless of the active rule.
  int rank_chrono(double t) const;

  // Exact piecewise integrals of the rank and of the at-the-top indicator.
  double integral_rank(double t0, double t1) const;
  double integral_top(double t0, double t1) const;

  FeedSort rule() const { return rule_; }
  double dwell() const { return dwell_; }
  std::size_t agent_post_count() const { return agent_posts_.size(); }
  std::size_t competitor_post_count() const { return competitor_posts_.size(); }

  // Next time strictly after t when a revealed post leaves the priority
  // section (rank can change there without any event). nullopt under
  // reverse-chronological sorting.
  std::optional<double> next_expiry_after(double t) const;

 private:
  struct Post {
    double time;
    int source;
  };
  int rank_priority(double t) const;
  template <typename RankFn>
  double piecewise_integral(double t0, double t1, RankFn&& value) const;

  FeedSort rule_;
  double dwell_;
  std::vector<double> source_priority_;
  double agent_priority_;
  std::vector<Post> competitor_posts_;
  std::vector<double> agent_posts_;
};

// Raw visibility integrals of a completed trace: integral of the rank
// (lower is better) and of the time the newest post holds the top slot.
double reward_rank(const FeedState& feed, double horizon);
double reward_time_at_top(const FeedState& feed, double horizon);

struct BroadcastConfig {
  FeedSort sort = FeedSort::PriorityQueue;
  BroadcastReward reward = BroadcastReward::AvgRank;
  double episode_length = 1.0;
  double dwell_frac = 0.1;  // priority-section dwell as a fraction of episode_length
  bool use_test_window = false;  // false: sample training windows; true: replay the test window
};

// Replays competitor posts from a log window while the agent's sampled posts
// interleave; reward is the configured visibility metric (rank negated so the
// trainer always maximizes).
class BroadcastEnvironment final : public Environment {
 public:
  BroadcastEnvironment(std::shared_ptr<const ReplayLog> log, BroadcastConfig cfg);
  BroadcastEnvironment(const BroadcastEnvironment& other);  // shares the log, fresh episode state

  double horizon() const override { return cfg_.episode_length; }
  int action_mark_count() const override { return 0; }  // posting has no mark
  int feedback_mark_count() const override;
  void reset(const EpisodeKeys& keys) override;
  std::optional<Event> peek_feedback() override;
  void consume_feedback(const Event& delivered) override;
  std::vector<Event> apply_action(const Event& action) override;
  double terminal_reward(const EpisodeHistory& history) override;
  std::unique_ptr<Environment> clone() const override;

  const BroadcastConfig& config() const { return cfg_; }
  const FeedState& feed() const { return *feed_; }  // live view for rank heuristics
  const std::vector<std::string>& sources() const { return source_names_; }
  double source_priority(int idx) const { return priorities_.at(static_cast<std::size_t>(idx)); }
  double agent_priority() const { return agent_priority_; }

 private:
  std::shared_ptr<const ReplayLog> log_;
  BroadcastConfig cfg_;
  std::vector<std::string> source_names_;  // every source in the log, sorted
  std::vector<double> priorities_;         // per source, from training activity
  std::vector<int> policy_mark_;           // per source: embedding index (train vocab + other)
  int train_vocab_ = 0;
  double agent_priority_ = 1.0;

  // per-episode state
  double window_start_ = 0.0;
  std::size_t cursor_ = 0;
  std::unique_ptr<FeedState> feed_;
  std::vector<int> record_source_;  // per record: source index
};

// Convenience wrapper: one full replay episode of an arbitrary source.
EpisodeOutcome replay_episode(std::shared_ptr<const ReplayLog> log,
                              const BroadcastConfig& cfg, const SourceFactory& make_source,
                              const EpisodeKeys& keys);

}  // namespace mtpp

#endif
