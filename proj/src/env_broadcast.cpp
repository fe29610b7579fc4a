#include "mtpp/env_broadcast.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <set>

#include <json.hpp>

#include "mtpp/errors.hpp"

namespace mtpp {

std::size_t normalize_replay_records(std::vector<ReplayRecord>& records) {
  std::stable_sort(records.begin(), records.end(),
                   [](const ReplayRecord& a, const ReplayRecord& b) { return a.t < b.t; });
  std::size_t nudged = 0;
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].t <= records[i - 1].t) {
      records[i].t = records[i - 1].t + EpisodeHistory::kTieNudge;
      ++nudged;
    }
  }
  if (nudged > 0)
    std::cerr << "[mtpp] replay ingestion: nudged " << nudged
              << " tied timestamps by +1e-9 in arrival order\n";
  return nudged;
}

std::vector<ReplayRecord> load_replay_records(const std::string& jsonl_path) {
  std::ifstream is(jsonl_path);
  if (!is) throw data_error("replay log: cannot open: " + jsonl_path);
  std::vector<ReplayRecord> records;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw data_error("replay log: line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.is_object() || j.size() != 2 || !j.contains("t") || !j.contains("src") ||
        !j["t"].is_number() || !j["src"].is_string())
      throw data_error("replay log: line " + std::to_string(lineno) +
                       ": expected exactly {\"t\": <real>, \"src\": <string>}");
    records.push_back(ReplayRecord{j["t"].get<double>(), j["src"].get<std::string>()});
  }
  return records;
}

void save_replay_records(const std::string& jsonl_path,
                         const std::vector<ReplayRecord>& records) {
  std::ofstream os(jsonl_path, std::ios::trunc);
  if (!os) throw data_error("replay log: cannot open for write: " + jsonl_path);
  for (const ReplayRecord& r : records) {
    nlohmann::json j;
    j["t"] = r.t;
    j["src"] = r.src;
    os << j.dump() << "\n";
  }
  if (!os) throw data_error("replay log: write failed: " + jsonl_path);
}

ReplayLog load_replay_log(const std::string& jsonl_path, const std::string& manifest_path) {
  ReplayLog log;
  log.records = load_replay_records(jsonl_path);
  normalize_replay_records(log.records);
  std::ifstream is(manifest_path);
  if (!is) throw data_error("split manifest: cannot open: " + manifest_path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("split manifest: ") + e.what());
  }
  if (!j.is_object() || j.size() != 2 || !j.contains("train") || !j.contains("test") ||
      !j["train"].is_array() || j["train"].size() != 2 || !j["test"].is_array() ||
      j["test"].size() != 2)
    throw data_error("split manifest: expected {\"train\": [t0,t1], \"test\": [t1,t2]}");
  log.train_begin = j["train"][0].get<double>();
  log.train_end = j["train"][1].get<double>();
  log.test_begin = j["test"][0].get<double>();
  log.test_end = j["test"][1].get<double>();
  if (!(log.train_begin <= log.train_end && log.test_begin <= log.test_end))
    throw data_error("split manifest: windows must be ordered");
  return log;
}

void save_split_manifest(const std::string& path, const ReplayLog& log) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw data_error("split manifest: cannot open for write: " + path);
  nlohmann::json j;
  j["train"] = {log.train_begin, log.train_end};
  j["test"] = {log.test_begin, log.test_end};
  os << j.dump(2) << "\n";
  if (!os) throw data_error("split manifest: write failed: " + path);
}

ReplayLog synth_competitors(const std::vector<SynthSource>& sources, double span,
                            double test_span, std::uint64_t seed) {
  if (!(span > 0.0) || test_span < 0.0 || test_span > span)
    throw precondition_error("synth_competitors: need 0 <= test_span <= span");
  ReplayLog log;
  std::uint64_t salt = 0;
  for (const SynthSource& s : sources) {
    RandomStream rng(derive_key(seed, 0x73796e74ULL, salt++, 0));
    if (s.rate > 0.0) {
      double t = rng.next_exponential(s.rate);
      while (t < span) {
        log.records.push_back(ReplayRecord{t, s.name});
        t += rng.next_exponential(s.rate);
      }
    }
    if (s.burst_every > 0.0 && s.burst_size > 0) {
      for (double t0 = s.burst_every; t0 < span; t0 += s.burst_every)
        for (int k = 0; k < s.burst_size; ++k)
          log.records.push_back(
              ReplayRecord{t0 + static_cast<double>(k) * 1e-3, s.name});
    }
  }
  normalize_replay_records(log.records);
  log.train_begin = 0.0;
  log.train_end = span - test_span;
  log.test_begin = span - test_span;
  log.test_end = span;
  return log;
}

// --- feed state ---------------------------------------------------------------

FeedState::FeedState(FeedSort rule, double dwell, std::vector<double> source_priority,
                     double agent_priority)
    : rule_(rule),
      dwell_(dwell),
      source_priority_(std::move(source_priority)),
      agent_priority_(agent_priority) {
  if (rule_ == FeedSort::PriorityQueue && dwell_ < 0.0)
    throw precondition_error("FeedState: dwell must be >= 0");
  agent_posts_.push_back(0.0);  // the wall starts with the agent's post on top
}

void FeedState::add_competitor_post(double t, int source) {
  if (!competitor_posts_.empty() && t < competitor_posts_.back().time)
    throw precondition_error("FeedState: competitor posts must arrive in time order");
  competitor_posts_.push_back(Post{t, source});
}

void FeedState::add_agent_post(double t) {
  if (t < agent_posts_.back())
    throw precondition_error("FeedState: agent posts must arrive in time order");
  agent_posts_.push_back(t);
}

int FeedState::rank_chrono(double t) const {
  // competitor posts newer than the agent's latest post
  auto it = std::upper_bound(agent_posts_.begin(), agent_posts_.end(), t);
  const double agent_last = *(it - 1);
  int above = 0;
  for (const Post& p : competitor_posts_) {
    if (p.time > t) break;
    if (p.time > agent_last) ++above;
  }
  return above;
}

int FeedState::rank_priority(double t) const {
  auto it = std::upper_bound(agent_posts_.begin(), agent_posts_.end(), t);
  const double agent_last = *(it - 1);
  const bool agent_in_top = (t - agent_last) < dwell_;

  if (!agent_in_top) {
    // every fresher competitor section plus bulk posts newer than ours
    int above = 0;
    for (const Post& p : competitor_posts_) {
      if (p.time > t) break;
      const bool in_top = (t - p.time) < dwell_;
      if (in_top || p.time > agent_last) ++above;
    }
    return above;
  }

  // The top section groups posts by poster, groups ordered by priority and,
  // on equal priority, by the group's newest post; within a group posts stay
  // chronological. Count the competitor posts in groups above ours.
  std::map<int, std::pair<int, double>> groups;  // source -> (count, newest)
  for (const Post& p : competitor_posts_) {
    if (p.time > t) break;
    if ((t - p.time) >= dwell_) continue;
    auto& g = groups[p.source];
    g.first += 1;
    g.second = std::max(g.second, p.time);
  }
  int above = 0;
  for (const auto& [source, g] : groups) {
    const double prio = source_priority_.at(static_cast<std::size_t>(source));
    if (prio > agent_priority_ || (prio == agent_priority_ && g.second > agent_last))
      above += g.first;
  }
  return above;
}

int FeedState::rank(double t) const {
  return rule_ == FeedSort::ReverseChrono ? rank_chrono(t) : rank_priority(t);
}

template <typename RankFn>
double FeedState::piecewise_integral(double t0, double t1, RankFn&& value) const {
  // The rank can change only where a post arrives or leaves the priority
  // section, so integrating between those breakpoints is exact.
  std::set<double> cuts;
  cuts.insert(t0);
  cuts.insert(t1);
  auto add_cut = [&](double t) {
    if (t > t0 && t < t1) cuts.insert(t);
  };
  for (const Post& p : competitor_posts_) {
    add_cut(p.time);
    if (rule_ == FeedSort::PriorityQueue) add_cut(p.time + dwell_);
  }
  for (double t : agent_posts_) {
    add_cut(t);
    if (rule_ == FeedSort::PriorityQueue) add_cut(t + dwell_);
  }
  double total = 0.0;
  for (auto it = cuts.begin(); std::next(it) != cuts.end(); ++it) {
    const double a = *it, b = *std::next(it);
    total += value(a) * (b - a);
  }
  return total;
}

std::optional<double> FeedState::next_expiry_after(double t) const {
  if (rule_ != FeedSort::PriorityQueue) return std::nullopt;
  double best = std::numeric_limits<double>::infinity();
  for (const Post& p : competitor_posts_) {
    const double e = p.time + dwell_;
    if (e > t) best = std::min(best, e);
  }
  for (double a : agent_posts_) {
    const double e = a + dwell_;
    if (e > t) best = std::min(best, e);
  }
  if (!std::isfinite(best)) return std::nullopt;
  return best;
}

double FeedState::integral_rank(double t0, double t1) const {
  return piecewise_integral(t0, t1,
                            [&](double t) { return static_cast<double>(rank(t)); });
}

double FeedState::integral_top(double t0, double t1) const {
  return piecewise_integral(t0, t1, [&](double t) { return rank(t) < 1 ? 1.0 : 0.0; });
}

double reward_rank(const FeedState& feed, double horizon) {
  return feed.integral_rank(0.0, horizon);
}

double reward_time_at_top(const FeedState& feed, double horizon) {
  return feed.integral_top(0.0, horizon);
}

// --- environment ---------------------------------------------------------------

BroadcastEnvironment::BroadcastEnvironment(std::shared_ptr<const ReplayLog> log,
                                           BroadcastConfig cfg)
    : log_(std::move(log)), cfg_(cfg) {
  if (!log_) throw config_error("BroadcastEnvironment: missing replay log");
  if (!(cfg_.episode_length > 0.0))
    throw config_error("BroadcastEnvironment: episode_length must be > 0");

  std::set<std::string> names;
  for (const ReplayRecord& r : log_->records) names.insert(r.src);
  source_names_.assign(names.begin(), names.end());
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < source_names_.size(); ++i)
    index[source_names_[i]] = static_cast<int>(i);

  // Priority falls with training-window activity; the exact strictly
  // decreasing map is 1/(1 + count), rescaled so the most promoted source
  // sits at 1.
  std::vector<int> train_count(source_names_.size(), 0);
  for (const ReplayRecord& r : log_->records)
    if (r.t >= log_->train_begin && r.t < log_->train_end)
      ++train_count[static_cast<std::size_t>(index[r.src])];
  priorities_.resize(source_names_.size());
  double max_raw = 0.0;
  for (std::size_t i = 0; i < priorities_.size(); ++i) {
    priorities_[i] = 1.0 / (1.0 + static_cast<double>(train_count[i]));
    max_raw = std::max(max_raw, priorities_[i]);
  }
  if (max_raw > 0.0)
    for (double& p : priorities_) p /= max_raw;

  // agent priority: median competitor priority
  if (!priorities_.empty()) {
    std::vector<double> sorted = priorities_;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    agent_priority_ =
        n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  }

  // policy vocabulary: sources active in the training window, others -> one
  // reserved index
  policy_mark_.resize(source_names_.size());
  train_vocab_ = 0;
  for (std::size_t i = 0; i < source_names_.size(); ++i)
    if (train_count[i] > 0) policy_mark_[i] = train_vocab_++;
  for (std::size_t i = 0; i < source_names_.size(); ++i)
    if (train_count[i] == 0) policy_mark_[i] = train_vocab_;

  record_source_.reserve(log_->records.size());
  for (const ReplayRecord& r : log_->records)
    record_source_.push_back(index[r.src]);
}

BroadcastEnvironment::BroadcastEnvironment(const BroadcastEnvironment& other)
    : log_(other.log_),
      cfg_(other.cfg_),
      source_names_(other.source_names_),
      priorities_(other.priorities_),
      policy_mark_(other.policy_mark_),
      train_vocab_(other.train_vocab_),
      agent_priority_(other.agent_priority_),
      record_source_(other.record_source_) {}

int BroadcastEnvironment::feedback_mark_count() const {
  return source_names_.empty() ? 0 : train_vocab_ + 1;
}

void BroadcastEnvironment::reset(const EpisodeKeys& keys) {
  const double T = cfg_.episode_length;
  if (cfg_.use_test_window) {
    window_start_ = log_->test_begin;
  } else {
    RandomStream rng(keys.stream(stream_role::kEnvironment));
    const double span = (log_->train_end - log_->train_begin) - T;
    window_start_ =
        span > 0.0 ? log_->train_begin + rng.next_unit() * span : log_->train_begin;
  }
  cursor_ = static_cast<std::size_t>(
      std::lower_bound(log_->records.begin(), log_->records.end(), window_start_,
                       [](const ReplayRecord& r, double t) { return r.t < t; }) -
      log_->records.begin());
  const double dwell = cfg_.sort == FeedSort::PriorityQueue ? cfg_.dwell_frac * T : 0.0;
  feed_ = std::make_unique<FeedState>(cfg_.sort, dwell, priorities_, agent_priority_);
}

std::optional<Event> BroadcastEnvironment::peek_feedback() {
  if (cursor_ >= log_->records.size()) return std::nullopt;
  const ReplayRecord& r = log_->records[cursor_];
  const double rel = r.t - window_start_;
  if (rel >= cfg_.episode_length) return std::nullopt;
  const int src = record_source_[cursor_];
  return Event{rel, EventKind::Feedback, policy_mark_[static_cast<std::size_t>(src)]};
}

void BroadcastEnvironment::consume_feedback(const Event& delivered) {
  if (cursor_ >= log_->records.size())
    throw std::logic_error("BroadcastEnvironment: consume past the log end");
  feed_->add_competitor_post(delivered.time, record_source_[cursor_]);
  ++cursor_;
}

std::vector<Event> BroadcastEnvironment::apply_action(const Event& action) {
  feed_->add_agent_post(action.time);
  return {};
}

double BroadcastEnvironment::terminal_reward(const EpisodeHistory&) {
  const double T = cfg_.episode_length;
  return cfg_.reward == BroadcastReward::AvgRank ? -reward_rank(*feed_, T)
                                                 : reward_time_at_top(*feed_, T);
}

std::unique_ptr<Environment> BroadcastEnvironment::clone() const {
  return std::make_unique<BroadcastEnvironment>(*this);
}

EpisodeOutcome replay_episode(std::shared_ptr<const ReplayLog> log,
                              const BroadcastConfig& cfg, const SourceFactory& make_source,
                              const EpisodeKeys& keys) {
  BroadcastEnvironment env(std::move(log), cfg);
  auto source = make_source(env);
  return run_episode(env, *source, keys);
}

}  // namespace mtpp
