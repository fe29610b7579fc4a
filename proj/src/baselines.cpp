#include "mtpp/baselines.hpp"

#include <cmath>

#include "mtpp/errors.hpp"
#include "mtpp/reinforce.hpp"

namespace mtpp {

namespace {

class UniformPoissonSource final : public ActionSource {
 public:
  UniformPoissonSource(double rate, int mark_count) : rate_(rate), marks_(mark_count) {}
  void begin_episode(const EpisodeKeys&) override {}
  void observe(const Event&) override {}
  IntensitySegment segment_at(double t) override { return {rate_, 0.0, t}; }
  int sample_mark(RandomStream& rng, double) override { return rng.next_index(marks_); }

 private:
  double rate_;
  int marks_;
};

class RankProportionalSource final : public ActionSource {
 public:
  RankProportionalSource(const BroadcastEnvironment& env, double kappa, RankFlavor flavor)
      : env_(&env), kappa_(kappa), flavor_(flavor) {}
  void begin_episode(const EpisodeKeys&) override {}
  void observe(const Event&) override {}
  IntensitySegment segment_at(double t) override {
    const int r = flavor_ == RankFlavor::Chrono ? env_->feed().rank_chrono(t)
                                                : env_->feed().rank(t);
    return {kappa_ * static_cast<double>(r), 0.0, t};
  }
  std::optional<double> next_change_after(double t) override {
    // the true rank moves when posts age out of the priority section
    if (flavor_ == RankFlavor::Chrono) return std::nullopt;
    return env_->feed().next_expiry_after(t);
  }

 private:
  const BroadcastEnvironment* env_;
  double kappa_;
  RankFlavor flavor_;
};

class RecallGapSource final : public ActionSource {
 public:
  RecallGapSource(const MemoryEnvironment& env, double kappa) : env_(&env), kappa_(kappa) {}
  SamplingMechanism mechanism() const override { return SamplingMechanism::GeneralIntensity; }
  void begin_episode(const EpisodeKeys&) override {}
  void observe(const Event&) override {}
  double intensity_at(double t) const override {
    const StudentState& s = env_->student();
    double total = 0.0;
    for (int i = 0; i < s.item_count(); ++i) total += 1.0 - s.recall_prob(i, t);
    return kappa_ * total;
  }
  double intensity_bound(double, double) const override {
    return kappa_ * static_cast<double>(env_->student().item_count());
  }
  int sample_mark(RandomStream& rng, double at_time) override {
    const StudentState& s = env_->student();
    const int n = s.item_count();
    std::vector<double> weight(static_cast<std::size_t>(n));
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      weight[static_cast<std::size_t>(i)] = 1.0 - s.recall_prob(i, at_time);
      total += weight[static_cast<std::size_t>(i)];
    }
    if (total <= 0.0) return rng.next_index(n);  // everything known: any item
    double u = rng.next_unit() * total;
    for (int i = 0; i < n; ++i) {
      u -= weight[static_cast<std::size_t>(i)];
      if (u < 0.0) return i;
    }
    return n - 1;
  }

 private:
  const MemoryEnvironment* env_;
  double kappa_;
};

}  // namespace

SourceFactory uniform_poisson(double rate) {
  if (!(rate > 0.0)) throw precondition_error("uniform_poisson: rate must be > 0");
  return [rate](Environment& env) {
    return std::make_unique<UniformPoissonSource>(rate, env.action_mark_count());
  };
}

SourceFactory rank_proportional(double kappa, RankFlavor flavor) {
  if (!(kappa >= 0.0)) throw precondition_error("rank_proportional: kappa must be >= 0");
  return [kappa, flavor](Environment& env) -> std::unique_ptr<ActionSource> {
    auto* broadcast = dynamic_cast<BroadcastEnvironment*>(&env);
    if (broadcast == nullptr)
      throw config_error("rank_proportional: needs a broadcast environment");
    return std::make_unique<RankProportionalSource>(*broadcast, kappa, flavor);
  };
}

SourceFactory recall_gap(double kappa) {
  if (!(kappa >= 0.0)) throw precondition_error("recall_gap: kappa must be >= 0");
  return [kappa](Environment& env) -> std::unique_ptr<ActionSource> {
    auto* memory = dynamic_cast<MemoryEnvironment*>(&env);
    if (memory == nullptr) throw config_error("recall_gap: needs a memory environment");
    return std::make_unique<RecallGapSource>(*memory, kappa);
  };
}

BudgetCalibration calibrate_budget(const std::function<SourceFactory(double)>& family,
                                   const Environment& proto, double target,
                                   std::uint64_t seed, int episodes, double tol,
                                   int threads) {
  if (!(target > 0.0)) throw precondition_error("calibrate_budget: target must be > 0");
  auto mean_count = [&](double scale) {
    return evaluate(proto, family(scale), episodes, seed, threads).action_summary().mean;
  };

  double hi = 1.0, hi_count = mean_count(hi);
  int expansions = 0;
  while (hi_count < target) {
    hi *= 2.0;
    hi_count = mean_count(hi);
    if (++expansions > 60)
      throw config_error("calibrate_budget: target unreachable for this family");
  }
  if (std::abs(hi_count - target) <= tol * target)
    return {target, hi_count, hi};

  double lo = 0.0;
  for (int iter = 0; iter < 60; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double count = mean_count(mid);
    if (std::abs(count - target) <= tol * target) return {target, count, mid};
    if (count < target)
      lo = mid;
    else
      hi = mid;
  }
  throw config_error("calibrate_budget: bisection failed to land within tolerance");
}

}  // namespace mtpp
