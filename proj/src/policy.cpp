#include "mtpp/policy.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

#include "mtpp/errors.hpp"
#include "mtpp/rng.hpp"

namespace mtpp {

namespace {

// phi(x) = expm1(x)/x with phi(0) = 1; the unit-rate compensator shape.
// Series branch below 1e-8 matches the documented small-slope fallback.
double phi(double x) {
  if (std::abs(x) < 1e-8) return 1.0 + 0.5 * x;
  return std::expm1(x) / x;
}

// phi'(x) = (e^x (x - 1) + 1) / x^2, series near 0.
double dphi(double x) {
  if (std::abs(x) < 1e-5) return 0.5 + x / 3.0 + x * x / 8.0;
  return (std::exp(x) * (x - 1.0) + 1.0) / (x * x);
}

Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

void check_event_time(double t, double prev) {
  if (!(t >= prev))
    throw precondition_error("step_hidden: event times must be nondecreasing");
}

struct InputEmbeds {
  Eigen::VectorXd tau;   // elapsed-time embedding
  Eigen::VectorXd ymark; // action-mark embedding (zero when absent)
  Eigen::VectorXd zmark; // feedback-mark embedding (zero when absent)
  Eigen::VectorXd kind;  // event-kind embedding
  bool has_action_mark = false;
  bool has_feedback_mark = false;
};

InputEmbeds embed_event(const PolicyParams& p, const Event& e, double prev_time) {
  InputEmbeds in;
  const double dt = e.time - prev_time;
  in.tau = p.time_embed_w * dt + p.time_embed_b;
  in.ymark = Eigen::VectorXd::Zero(p.dims.input_dim);
  in.zmark = Eigen::VectorXd::Zero(p.dims.input_dim);
  if (e.kind == EventKind::Action && e.has_mark() && p.dims.action_marks > 0) {
    if (e.mark >= p.dims.action_marks)
      throw data_error("policy: action mark outside the configured vocabulary");
    in.ymark = p.action_embed_w.col(e.mark) + p.action_embed_b;
    in.has_action_mark = true;
  }
  if (e.kind == EventKind::Feedback && e.has_mark() && p.dims.feedback_marks > 0) {
    if (e.mark >= p.dims.feedback_marks)
      throw data_error("policy: feedback mark outside the configured vocabulary");
    in.zmark = p.feedback_embed_w.col(e.mark) + p.feedback_embed_b;
    in.has_feedback_mark = true;
  }
  in.kind = (e.kind == EventKind::Action ? p.kind_action_w : p.kind_feedback_w) + p.kind_bias;
  return in;
}

Eigen::VectorXd hidden_preact(const PolicyParams& p, const Eigen::VectorXd& h_prev,
                              const InputEmbeds& in) {
  Eigen::VectorXd u = p.recur_w * h_prev + p.in_time_w * in.tau + p.in_kind_w * in.kind +
                      p.hidden_bias;
  if (p.dims.action_marks > 0) u += p.in_action_w * in.ymark;
  if (p.dims.feedback_marks > 0) u += p.in_feedback_w * in.zmark;
  return u;
}

}  // namespace

PolicyParams init_params(const PolicyDims& dims, std::uint64_t seed, double init_scale,
                         double base_rate) {
  if (dims.input_dim < 1 || dims.hidden_dim < 1)
    throw precondition_error("init_params: dimensions must be >= 1");
  if (!(base_rate > 0.0)) throw precondition_error("init_params: base_rate must be > 0");
  PolicyParams p;
  p.dims = dims;
  const int di = dims.input_dim, dh = dims.hidden_dim;
  p.time_embed_w.setZero(di);
  p.time_embed_b.setZero(di);
  if (dims.action_marks > 0) {
    p.action_embed_w.setZero(di, dims.action_marks);
    p.action_embed_b.setZero(di);
    p.mark_w.setZero(dims.action_marks, dh);
  }
  if (dims.feedback_marks > 0) {
    p.feedback_embed_w.setZero(di, dims.feedback_marks);
    p.feedback_embed_b.setZero(di);
  }
  p.kind_action_w.setZero(di);
  p.kind_feedback_w.setZero(di);
  p.kind_bias.setZero(di);
  p.recur_w.setZero(dh, dh);
  p.in_time_w.setZero(dh, di);
  if (dims.action_marks > 0) p.in_action_w.setZero(dh, di);
  if (dims.feedback_marks > 0) p.in_feedback_w.setZero(dh, di);
  p.in_kind_w.setZero(dh, di);
  p.hidden_bias.setZero(dh);
  p.intensity_w.setZero(dh);

  RandomStream rng(derive_key(seed, 0x696e6974ULL, 0, 0));
  for_each_tensor(p, [&](TensorView v) {
    for (Eigen::Index i = 0; i < v.size; ++i)
      v.data[i] = rng.next_uniform(-init_scale, init_scale);
  });
  p.intensity_bias = std::log(base_rate);
  if (dims.freeze_time_slope) p.time_slope = 0.0;
  return p;
}

HiddenState initial_state(const PolicyParams& params) {
  return {Eigen::VectorXd::Zero(params.dims.hidden_dim), 0.0};
}

HiddenState step_hidden(const PolicyParams& params, const HiddenState& state,
                        const Event& event, double prev_time) {
  check_event_time(event.time, prev_time);
  const InputEmbeds in = embed_event(params, event, prev_time);
  HiddenState next;
  next.h = hidden_preact(params, state.h, in).array().tanh();
  next.last_action_time =
      event.kind == EventKind::Action ? event.time : state.last_action_time;
  return next;
}

IntensitySegment intensity_segment(const PolicyParams& params, const HiddenState& state,
                                   double at_time) {
  if (at_time < state.last_action_time)
    throw precondition_error("intensity_segment: query precedes the slope reference");
  const double w = params.dims.freeze_time_slope ? 0.0 : params.time_slope;
  const double z = params.intensity_bias + params.intensity_w.dot(state.h) +
                   w * (at_time - state.last_action_time);
  return IntensitySegment{std::exp(z), w, at_time};
}

MarkPmf mark_pmf(const PolicyParams& params, const HiddenState& state) {
  if (params.dims.action_marks <= 0)
    throw config_error("mark_pmf: the mark head is disabled for this policy");
  const Eigen::VectorXd logp = log_softmax(params.mark_w * state.h);
  MarkPmf pmf;
  pmf.probs.resize(static_cast<std::size_t>(logp.size()));
  for (Eigen::Index i = 0; i < logp.size(); ++i)
    pmf.probs[static_cast<std::size_t>(i)] = std::exp(logp[i]);
  return pmf;
}

GradientBundle episode_backward(const PolicyParams& params, const EpisodeHistory& history,
                                const RegularizerSpec& spec) {
  const auto& ev = history.events();
  const int n = static_cast<int>(ev.size());
  const double T = history.horizon();
  const int dh = params.dims.hidden_dim;
  const bool marks = params.dims.action_marks > 0;
  const bool want_sq = spec.intensity_sq;
  const bool want_en = spec.mark_entropy && marks;
  const double w = params.dims.freeze_time_slope ? 0.0 : params.time_slope;

  GradientBundle out;
  out.d_log_prob = zeros_like(params);
  out.d_intensity_sq = zeros_like(params);
  out.d_mark_entropy = zeros_like(params);
  enum { LP = 0, SQ = 1, EN = 2 };
  PolicyParams* grads[3] = {&out.d_log_prob, &out.d_intensity_sq, &out.d_mark_entropy};
  const bool active[3] = {true, want_sq, want_en};

  // forward: hidden states after each event, and the last action time at each
  std::vector<Eigen::VectorXd> h(static_cast<std::size_t>(n) + 1);
  std::vector<double> last_action(static_cast<std::size_t>(n) + 1, 0.0);
  h[0] = Eigen::VectorXd::Zero(dh);
  {
    double prev_t = 0.0;
    for (int j = 1; j <= n; ++j) {
      const Event& e = ev[static_cast<std::size_t>(j - 1)];
      check_event_time(e.time, prev_t);
      const InputEmbeds in = embed_event(params, e, prev_t);
      h[static_cast<std::size_t>(j)] =
          hidden_preact(params, h[static_cast<std::size_t>(j - 1)], in).array().tanh();
      last_action[static_cast<std::size_t>(j)] =
          e.kind == EventKind::Action ? e.time : last_action[static_cast<std::size_t>(j - 1)];
      prev_t = e.time;
    }
  }

  // adjoints dF/dh_j for the three objectives
  std::vector<Eigen::VectorXd> adj[3];
  for (auto& a : adj) a.assign(static_cast<std::size_t>(n) + 1, Eigen::VectorXd::Zero(dh));

  auto event_time = [&](int j) { return j == 0 ? 0.0 : ev[static_cast<std::size_t>(j - 1)].time; };

  // inter-event intervals [t_j, t_{j+1}) with t_0 = 0 and t_{n+1} = T
  for (int j = 0; j <= n; ++j) {
    const std::size_t sj = static_cast<std::size_t>(j);
    const double t0 = event_time(j);
    const double t1 = j == n ? T : event_time(j + 1);
    const double a = last_action[sj];
    const double alpha = t0 - a;
    const double delta = t1 - t0;
    const double zc = params.intensity_bias + params.intensity_w.dot(h[sj]);
    const double head = std::exp(zc + w * alpha);

    {  // survival term of the log-likelihood
      const double lam_int = head * delta * phi(w * delta);
      out.log_prob -= lam_int;
      out.d_log_prob.intensity_bias -= lam_int;
      out.d_log_prob.intensity_w -= lam_int * h[sj];
      if (!params.dims.freeze_time_slope)
        out.d_log_prob.time_slope -=
            head * (alpha * delta * phi(w * delta) + delta * delta * dphi(w * delta));
      adj[LP][sj] -= lam_int * params.intensity_w;
    }
    if (want_sq) {
      const double head2 = head * head;  // exp(2 zc + 2 w alpha)
      const double sq_int = head2 * delta * phi(2.0 * w * delta);
      out.intensity_sq_integral += sq_int;
      out.d_intensity_sq.intensity_bias += 2.0 * sq_int;
      out.d_intensity_sq.intensity_w += 2.0 * sq_int * h[sj];
      if (!params.dims.freeze_time_slope)
        out.d_intensity_sq.time_slope +=
            head2 * 2.0 *
            (alpha * delta * phi(2.0 * w * delta) + delta * delta * dphi(2.0 * w * delta));
      adj[SQ][sj] += 2.0 * sq_int * params.intensity_w;
    }
    if (want_en && delta > 0.0) {
      const Eigen::VectorXd logp = log_softmax(params.mark_w * h[sj]);
      const Eigen::VectorXd p = logp.array().exp();
      const double H = -(p.array() * logp.array()).sum();
      out.mark_entropy_integral += H * delta;
      const Eigen::VectorXd dHdl = -(p.array() * (logp.array() + H)).matrix();
      out.d_mark_entropy.mark_w += delta * dHdl * h[sj].transpose();
      adj[EN][sj] += delta * params.mark_w.transpose() * dHdl;
    }
  }

  // realized action terms of the log-likelihood
  for (int j = 1; j <= n; ++j) {
    const Event& e = ev[static_cast<std::size_t>(j - 1)];
    if (e.kind != EventKind::Action) continue;
    const std::size_t sprev = static_cast<std::size_t>(j - 1);
    const double dt_action = e.time - last_action[sprev];
    out.log_prob +=
        params.intensity_bias + w * dt_action + params.intensity_w.dot(h[sprev]);
    out.d_log_prob.intensity_bias += 1.0;
    out.d_log_prob.intensity_w += h[sprev];
    if (!params.dims.freeze_time_slope) out.d_log_prob.time_slope += dt_action;
    adj[LP][sprev] += params.intensity_w;
    if (marks) {
      if (!e.has_mark())
        throw data_error("episode_backward: marked policy saw an unmarked action");
      const Eigen::VectorXd logp = log_softmax(params.mark_w * h[sprev]);
      const Eigen::VectorXd p = logp.array().exp();
      out.log_prob += logp[e.mark];
      out.d_log_prob.mark_w.row(e.mark) += h[sprev].transpose();
      out.d_log_prob.mark_w -= p * h[sprev].transpose();
      adj[LP][sprev] +=
          params.mark_w.row(e.mark).transpose() - params.mark_w.transpose() * p;
    }
  }

  // reverse pass through the recurrence
  {
    double prev_t;
    for (int j = n; j >= 1; --j) {
      const std::size_t sj = static_cast<std::size_t>(j);
      const Event& e = ev[sj - 1];
      prev_t = j == 1 ? 0.0 : ev[sj - 2].time;
      const InputEmbeds in = embed_event(params, e, prev_t);
      const double dt = e.time - prev_t;
      const Eigen::ArrayXd dtanh = 1.0 - h[sj].array().square();
      for (int k = 0; k < 3; ++k) {
        if (!active[k]) continue;
        if (adj[k][sj].isZero(0.0)) continue;
        const Eigen::VectorXd du = (adj[k][sj].array() * dtanh).matrix();
        PolicyParams& g = *grads[k];
        g.recur_w += du * h[sj - 1].transpose();
        g.hidden_bias += du;
        g.in_time_w += du * in.tau.transpose();
        const Eigen::VectorXd rt = params.in_time_w.transpose() * du;
        g.time_embed_w += dt * rt;
        g.time_embed_b += rt;
        if (in.has_action_mark) {
          g.in_action_w += du * in.ymark.transpose();
          const Eigen::VectorXd ra = params.in_action_w.transpose() * du;
          g.action_embed_w.col(e.mark) += ra;
          g.action_embed_b += ra;
        }
        if (in.has_feedback_mark) {
          g.in_feedback_w += du * in.zmark.transpose();
          const Eigen::VectorXd rf = params.in_feedback_w.transpose() * du;
          g.feedback_embed_w.col(e.mark) += rf;
          g.feedback_embed_b += rf;
        }
        g.in_kind_w += du * in.kind.transpose();
        const Eigen::VectorXd rk = params.in_kind_w.transpose() * du;
        (e.kind == EventKind::Action ? g.kind_action_w : g.kind_feedback_w) += rk;
        g.kind_bias += rk;
        adj[k][sj - 1] += params.recur_w.transpose() * du;
      }
    }
  }

  if (params.dims.freeze_time_slope)
    for (auto* g : grads) g->time_slope = 0.0;

  for (int k = 0; k < 3; ++k) {
    if (!active[k]) continue;
    if (const char* bad = first_non_finite(*grads[k])) {
      throw numeric_error(std::string("episode_backward: non-finite gradient in tensor ") +
                          bad);
    }
  }
  if (!std::isfinite(out.log_prob) || !std::isfinite(out.intensity_sq_integral) ||
      !std::isfinite(out.mark_entropy_integral))
    throw numeric_error("episode_backward: non-finite objective value");
  return out;
}

// --- parameter plumbing ------------------------------------------------------

namespace {
std::vector<TensorView> tensor_views(PolicyParams& p) {
  std::vector<TensorView> out;
  for_each_tensor(p, [&](TensorView v) { out.push_back(v); });
  return out;
}
std::vector<TensorConstView> tensor_views(const PolicyParams& p) {
  std::vector<TensorConstView> out;
  for_each_tensor(p, [&](TensorConstView v) { out.push_back(v); });
  return out;
}
}  // namespace

PolicyParams zeros_like(const PolicyParams& p) {
  PolicyParams z = p;
  for_each_tensor(z, [](TensorView v) { std::memset(v.data, 0, sizeof(double) * v.size); });
  return z;
}

void add_scaled(PolicyParams& dest, const PolicyParams& src, double scale) {
  if (!(dest.dims == src.dims)) throw precondition_error("add_scaled: shape mismatch");
  const auto d = tensor_views(dest);
  const auto s = tensor_views(src);
  for (std::size_t k = 0; k < d.size(); ++k)
    for (Eigen::Index i = 0; i < d[k].size; ++i) d[k].data[i] += scale * s[k].data[i];
}

void scale_in_place(PolicyParams& p, double scale) {
  for_each_tensor(p, [&](TensorView v) {
    for (Eigen::Index i = 0; i < v.size; ++i) v.data[i] *= scale;
  });
}

double l2_norm(const PolicyParams& p) {
  double sq = 0.0;
  for_each_tensor(p, [&](TensorConstView v) {
    for (Eigen::Index i = 0; i < v.size; ++i) sq += v.data[i] * v.data[i];
  });
  return std::sqrt(sq);
}

Eigen::Index parameter_count(const PolicyParams& p) {
  Eigen::Index n = 0;
  for_each_tensor(p, [&](TensorConstView v) { n += v.size; });
  return n;
}

const char* first_non_finite(const PolicyParams& p) {
  const char* bad = nullptr;
  for_each_tensor(p, [&](TensorConstView v) {
    if (bad) return;
    for (Eigen::Index i = 0; i < v.size; ++i)
      if (!std::isfinite(v.data[i])) {
        bad = v.name;
        return;
      }
  });
  return bad;
}

// --- checkpoint io ------------------------------------------------------------

namespace {
constexpr char kMagic[8] = {'M', 'T', 'P', 'P', 'C', 'K', '1', '\n'};

void write_raw(std::ofstream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}
void read_raw(std::ifstream& is, void* p, std::size_t n) {
  if (!is.read(static_cast<char*>(p), static_cast<std::streamsize>(n)))
    throw data_error("checkpoint: truncated file");
}
}  // namespace

void save_checkpoint(const std::string& path, const PolicyParams& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw data_error("checkpoint: cannot open for write: " + path);
  write_raw(os, kMagic, sizeof(kMagic));
  const std::int32_t header[5] = {params.dims.input_dim, params.dims.hidden_dim,
                                  params.dims.action_marks, params.dims.feedback_marks,
                                  params.dims.freeze_time_slope ? 1 : 0};
  write_raw(os, header, sizeof(header));
  for_each_tensor(params, [&](TensorConstView v) {
    const std::int64_t n = v.size;
    write_raw(os, &n, sizeof(n));
    write_raw(os, v.data, sizeof(double) * static_cast<std::size_t>(n));
  });
  if (!os) throw data_error("checkpoint: write failed: " + path);
}

PolicyParams load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("checkpoint: cannot open: " + path);
  char magic[8];
  read_raw(is, magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw data_error("checkpoint: bad magic/version: " + path);
  std::int32_t header[5];
  read_raw(is, header, sizeof(header));
  PolicyDims dims;
  dims.input_dim = header[0];
  dims.hidden_dim = header[1];
  dims.action_marks = header[2];
  dims.feedback_marks = header[3];
  dims.freeze_time_slope = header[4] != 0;
  PolicyParams p = init_params(dims, 0, 0.0, 1.0);
  for_each_tensor(p, [&](TensorView v) {
    std::int64_t n = 0;
    read_raw(is, &n, sizeof(n));
    if (n != v.size) throw data_error("checkpoint: tensor size mismatch: " + path);
    read_raw(is, v.data, sizeof(double) * static_cast<std::size_t>(n));
  });
  return p;
}

}  // namespace mtpp
