#ifndef MTPP_TESTS_ORACLES_HPP
#define MTPP_TESTS_ORACLES_HPP

// Independent reference implementations used only by tests: numerical
// quadrature, straight-line re-evaluations of the network layers, and small
// significance tests. The scripted-intensity and finite-difference machinery
// lives in mtpp/diagnostics.hpp (it also backs the CLI self-checks).

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "mtpp/core.hpp"
#include "mtpp/diagnostics.hpp"
#include "mtpp/policy.hpp"
#include "mtpp/rng.hpp"

namespace oracles {

using mtpp::ks_against_cdf;
using mtpp::ks_two_sample;
using mtpp::random_episode_case;
using mtpp::scripted_first_arrival;
using mtpp::ScriptedIntensity;
using mtpp::ScriptFeed;
using mtpp::ScriptPolicyView;
using mtpp::thinning_first_arrival;
using FdReport = mtpp::FdReport;

inline FdReport finite_difference_check(const mtpp::PolicyParams& params,
                                        const mtpp::EpisodeHistory& history,
                                        const mtpp::RegularizerSpec& spec,
                                        double step = 1e-5) {
  return mtpp::finite_difference_check(params, history, spec, step);
}

// ---- adaptive Simpson quadrature --------------------------------------------

inline double simpson(const std::function<double(double)>& f, double a, double b) {
  const double c = 0.5 * (a + b);
  return (b - a) / 6.0 * (f(a) + 4.0 * f(c) + f(b));
}

inline double adaptive_simpson_rec(const std::function<double(double)>& f, double a,
                                   double b, double whole, double eps, int depth) {
  const double c = 0.5 * (a + b);
  const double left = simpson(f, a, c);
  const double right = simpson(f, c, b);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * eps)
    return left + right + (left + right - whole) / 15.0;
  return adaptive_simpson_rec(f, a, c, left, eps / 2.0, depth - 1) +
         adaptive_simpson_rec(f, c, b, right, eps / 2.0, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double eps = 1e-12) {
  if (a == b) return 0.0;
  return adaptive_simpson_rec(f, a, b, simpson(f, a, b), eps, 48);
}

// ---- straight-line network layer evaluation -----------------------------------
// Plain-loop transcription of the layer equations, sharing no code with the
// implementation under test.

inline std::vector<double> straight_line_hidden(const mtpp::PolicyParams& p,
                                                const std::vector<double>& h_prev,
                                                const mtpp::Event& e, double prev_time) {
  const int di = p.dims.input_dim, dh = p.dims.hidden_dim;
  const double dt = e.time - prev_time;
  std::vector<double> tau(di), ym(di, 0.0), zm(di, 0.0), kind(di);
  for (int i = 0; i < di; ++i) tau[i] = p.time_embed_w(i) * dt + p.time_embed_b(i);
  const bool is_action = e.kind == mtpp::EventKind::Action;
  if (is_action && e.has_mark() && p.dims.action_marks > 0)
    for (int i = 0; i < di; ++i)
      ym[i] = p.action_embed_w(i, e.mark) + p.action_embed_b(i);
  if (!is_action && e.has_mark() && p.dims.feedback_marks > 0)
    for (int i = 0; i < di; ++i)
      zm[i] = p.feedback_embed_w(i, e.mark) + p.feedback_embed_b(i);
  for (int i = 0; i < di; ++i)
    kind[i] = (is_action ? p.kind_action_w(i) : p.kind_feedback_w(i)) + p.kind_bias(i);
  std::vector<double> out(dh);
  for (int r = 0; r < dh; ++r) {
    double u = p.hidden_bias(r);
    for (int c = 0; c < dh; ++c) u += p.recur_w(r, c) * h_prev[static_cast<std::size_t>(c)];
    for (int c = 0; c < di; ++c) {
      u += p.in_time_w(r, c) * tau[c];
      if (p.dims.action_marks > 0) u += p.in_action_w(r, c) * ym[c];
      if (p.dims.feedback_marks > 0) u += p.in_feedback_w(r, c) * zm[c];
      u += p.in_kind_w(r, c) * kind[c];
    }
    out[static_cast<std::size_t>(r)] = std::tanh(u);
  }
  return out;
}

inline double straight_line_intensity(const mtpp::PolicyParams& p,
                                      const std::vector<double>& h, double last_action,
                                      double t) {
  double z = p.intensity_bias;
  if (!p.dims.freeze_time_slope) z += p.time_slope * (t - last_action);
  for (int i = 0; i < p.dims.hidden_dim; ++i)
    z += p.intensity_w(i) * h[static_cast<std::size_t>(i)];
  return std::exp(z);
}

inline std::vector<double> straight_line_log_pmf(const mtpp::PolicyParams& p,
                                                 const std::vector<double>& h) {
  const int ny = p.dims.action_marks;
  std::vector<double> logits(ny);
  for (int c = 0; c < ny; ++c) {
    double z = 0.0;
    for (int i = 0; i < p.dims.hidden_dim; ++i)
      z += p.mark_w(c, i) * h[static_cast<std::size_t>(i)];
    logits[static_cast<std::size_t>(c)] = z;
  }
  // log-sum-exp in the log domain
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double s = 0.0;
  for (double v : logits) s += std::exp(v - m);
  const double lse = m + std::log(s);
  for (double& v : logits) v -= lse;
  return logits;
}

// ---- statistics ---------------------------------------------------------------

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

struct MeanVar {
  double mean = 0.0;
  double var = 0.0;  // sample variance
  std::size_t n = 0;
};

inline MeanVar mean_var(const std::vector<double>& xs) {
  MeanVar mv;
  mv.n = xs.size();
  for (double x : xs) mv.mean += x;
  mv.mean /= static_cast<double>(mv.n);
  for (double x : xs) mv.var += (x - mv.mean) * (x - mv.mean);
  mv.var = mv.n > 1 ? mv.var / static_cast<double>(mv.n - 1) : 0.0;
  return mv;
}

// One-sided Welch test p-value for mean(a) > mean(b) (normal approximation).
inline double p_value_mean_greater(const std::vector<double>& a,
                                   const std::vector<double>& b) {
  const MeanVar ma = mean_var(a), mb = mean_var(b);
  const double se = std::sqrt(ma.var / static_cast<double>(ma.n) +
                              mb.var / static_cast<double>(mb.n));
  if (se == 0.0) return ma.mean > mb.mean ? 0.0 : 1.0;
  const double z = (ma.mean - mb.mean) / se;
  return 1.0 - normal_cdf(z);
}

}  // namespace oracles

#endif
