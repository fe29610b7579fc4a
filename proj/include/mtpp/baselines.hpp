#ifndef MTPP_BASELINES_HPP
#define MTPP_BASELINES_HPP

#include <functional>

#include "mtpp/env_broadcast.hpp"
#include "mtpp/env_memory.hpp"
#include "mtpp/episode.hpp"

namespace mtpp {

// Constant-rate scheduler; marks (when the environment has them) chosen
// uniformly at random.
SourceFactory uniform_poisson(double rate);

enum class RankFlavor { Chrono, Priority };

// Posts with intensity kappa * rank(t), reading the rank online from the
// broadcast feed. The chrono flavor tracks the reverse-chronological rank
// even on priority-sorted feeds; the priority flavor tracks the true rank.
SourceFactory rank_proportional(double kappa, RankFlavor flavor);

// Reviews with per-item intensity kappa * (1 - recall probability), reading
// the true student model; items chosen proportional to their intensity.
SourceFactory recall_gap(double kappa);

struct BudgetCalibration {
  double target = 0.0;    // wanted mean actions per episode
  double achieved = 0.0;  // mean actions at the returned scale
  double scale = 0.0;     // the family's rate constant
};

// Bisection on the family's scale constant until the mean episode action
// count lands within tol of the target, over a fixed set of seeded episodes
// (common random numbers keep the response monotone and the search
// deterministic).
BudgetCalibration calibrate_budget(const std::function<SourceFactory(double)>& family,
                                   const Environment& proto, double target,
                                   std::uint64_t seed, int episodes = 200,
                                   double tol = 0.10, int threads = 1);

}  // namespace mtpp

#endif
