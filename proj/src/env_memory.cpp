#include "mtpp/env_memory.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "mtpp/errors.hpp"

namespace mtpp {

std::vector<Item> synth_items(int count, double rate_min, double rate_max,
                              std::uint64_t seed) {
  if (count < 1 || !(rate_min > 0.0) || !(rate_max >= rate_min))
    throw precondition_error("synth_items: need count >= 1 and 0 < rate_min <= rate_max");
  RandomStream rng(derive_key(seed, 0x6974656dULL, 0, 0));
  std::vector<Item> items;
  items.reserve(static_cast<std::size_t>(count));
  const double lo = std::log(rate_min), hi = std::log(rate_max);
  for (int i = 0; i < count; ++i)
    items.push_back(Item{i, std::exp(rng.next_uniform(lo, hi))});
  return items;
}

std::vector<Item> load_items(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw data_error("load_items: cannot open: " + path);
  std::vector<Item> items;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    Item it;
    char comma = 0;
    if (!(ls >> it.id >> comma >> it.initial_rate) || comma != ',')
      throw data_error("load_items: bad line " + std::to_string(lineno) + " in " + path);
    if (!(it.initial_rate >= 0.0))
      throw data_error("load_items: negative rate at line " + std::to_string(lineno));
    items.push_back(it);
  }
  if (items.empty()) throw data_error("load_items: no items in " + path);
  return items;
}

void save_items(const std::string& path, const std::vector<Item>& items) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw data_error("save_items: cannot open for write: " + path);
  os.precision(17);
  for (const Item& it : items) os << it.id << "," << it.initial_rate << "\n";
  if (!os) throw data_error("save_items: write failed: " + path);
}

StudentState::StudentState(const MemoryConfig* cfg) : cfg_(cfg) {
  rate_.reserve(cfg->items.size());
  for (const Item& it : cfg->items) rate_.push_back(it.initial_rate);
  last_review_.assign(cfg->items.size(), std::nullopt);
}

double StudentState::recall_prob(int item, double t) const {
  const auto& last = last_review_.at(static_cast<std::size_t>(item));
  if (!last) return 0.0;  // never reviewed: nothing to recall
  if (t < *last) throw precondition_error("recall_prob: query before the last review");
  return std::exp(-rate_[static_cast<std::size_t>(item)] * (t - *last));
}

StudentState::ReviewOutcome StudentState::review(int item, double t, RandomStream& rng) {
  if (item < 0 || static_cast<std::size_t>(item) >= rate_.size())
    throw data_error("review: unknown item id");
  const auto& last = last_review_[static_cast<std::size_t>(item)];
  if (last && t < *last) throw precondition_error("review: reviews must move forward in time");
  ReviewOutcome out;
  out.prob = recall_prob(item, t);
  out.recalled = rng.next_bernoulli(out.prob);
  double& r = rate_[static_cast<std::size_t>(item)];
  r *= out.recalled ? (1.0 - cfg_->recall_discount) : (1.0 + cfg_->forget_penalty);
  last_review_[static_cast<std::size_t>(item)] = t;
  return out;
}

double episode_reward(const StudentState& student, const MemoryConfig& cfg,
                      RandomStream& rng) {
  if (cfg.items.empty()) return 0.0;
  const double t_test = cfg.horizon + cfg.test_delay;
  int recalled = 0;
  for (std::size_t i = 0; i < cfg.items.size(); ++i)
    if (rng.next_bernoulli(student.recall_prob(static_cast<int>(i), t_test))) ++recalled;
  return static_cast<double>(recalled) / static_cast<double>(cfg.items.size());
}

MemoryEnvironment::MemoryEnvironment(MemoryConfig cfg)
    : cfg_(std::move(cfg)), student_(&cfg_) {
  if (cfg_.items.empty()) throw config_error("MemoryEnvironment: item set is empty");
  if (!(cfg_.recall_discount >= 0.0 && cfg_.recall_discount < 1.0))
    throw config_error("MemoryEnvironment: recall_discount must lie in [0, 1)");
  if (!(cfg_.forget_penalty >= 0.0))
    throw config_error("MemoryEnvironment: forget_penalty must be >= 0");
}

void MemoryEnvironment::reset(const EpisodeKeys& keys) {
  student_ = StudentState(&cfg_);
  env_rng_ = RandomStream(keys.stream(stream_role::kEnvironment));
  reward_rng_ = RandomStream(keys.stream(stream_role::kReward));
}

std::vector<Event> MemoryEnvironment::apply_action(const Event& action) {
  if (!action.has_mark()) throw data_error("MemoryEnvironment: action must name an item");
  const auto outcome = student_.review(action.mark, action.time, env_rng_);
  // Same-instant recall feedback; the history layer nudges it just after the
  // action to keep the ordering strict.
  return {Event{action.time, EventKind::Feedback,
                encode_review_mark(action.mark, outcome.recalled)}};
}

double MemoryEnvironment::terminal_reward(const EpisodeHistory&) {
  return episode_reward(student_, cfg_, reward_rng_);
}

std::unique_ptr<Environment> MemoryEnvironment::clone() const {
  return std::make_unique<MemoryEnvironment>(cfg_);
}

}  // namespace mtpp
