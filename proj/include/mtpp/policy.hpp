#ifndef MTPP_POLICY_HPP
#define MTPP_POLICY_HPP

#include <Eigen/Core>
#include <cstdint>
#include <string>

#include "mtpp/core.hpp"

namespace mtpp {

struct PolicyDims {
  int input_dim = 8;        // width of the input-layer embeddings
  int hidden_dim = 8;       // width of the recurrent state
  int action_marks = 0;     // action-mark vocabulary size; 0 disables the mark head
  int feedback_marks = 0;   // feedback-mark vocabulary size; 0 disables that embedding
  bool freeze_time_slope = false;  // pins the within-interval slope at 0

  bool operator==(const PolicyDims&) const = default;
};

// All trainable tensors of the recurrent policy. Also reused as the shape for
// gradients and optimizer moments.
struct PolicyParams {
  PolicyDims dims;

  // input layer
  Eigen::VectorXd time_embed_w, time_embed_b;          // elapsed-time embedding
  Eigen::MatrixXd action_embed_w;                      // input_dim x action_marks
  Eigen::VectorXd action_embed_b;
  Eigen::MatrixXd feedback_embed_w;                    // input_dim x feedback_marks
  Eigen::VectorXd feedback_embed_b;
  Eigen::VectorXd kind_action_w, kind_feedback_w, kind_bias;

  // hidden layer
  Eigen::MatrixXd recur_w;                             // hidden x hidden
  Eigen::MatrixXd in_time_w, in_action_w, in_feedback_w, in_kind_w;  // hidden x input
  Eigen::VectorXd hidden_bias;

  // output heads
  Eigen::VectorXd intensity_w;                         // hidden
  double intensity_bias = 0.0;
  double time_slope = 0.0;
  Eigen::MatrixXd mark_w;                              // action_marks x hidden
};

// Recurrent embedding plus the reference time of the intensity's slope term.
struct HiddenState {
  Eigen::VectorXd h;
  double last_action_time = 0.0;
};

struct RegularizerSpec {
  bool intensity_sq = false;   // integral of lambda^2
  bool mark_entropy = false;   // integral of the mark-distribution entropy
};

// Scalars and per-parameter gradients of one completed episode: the action
// log-likelihood and the two regularizer integrals, each differentiated
// exactly by a reverse pass through the recurrence.
struct GradientBundle {
  PolicyParams d_log_prob;
  PolicyParams d_intensity_sq;
  PolicyParams d_mark_entropy;
  double log_prob = 0.0;
  double intensity_sq_integral = 0.0;
  double mark_entropy_integral = 0.0;
};

// Deterministic initialization: every tensor uniform on [-init_scale,
// init_scale] from the seeded stream, except the intensity bias which anchors
// the initial rate at log(base_rate) and the slope which stays 0 when frozen.
PolicyParams init_params(const PolicyDims& dims, std::uint64_t seed, double init_scale,
                         double base_rate = 1.0);

HiddenState initial_state(const PolicyParams& params);

// One recurrence step: embeds (elapsed time, kind, mark) and applies the tanh
// update. Absent marks contribute a zero vector. The slope reference time
// advances only on action events.
HiddenState step_hidden(const PolicyParams& params, const HiddenState& state,
                        const Event& event, double prev_time);

// Intensity c * exp(w (t - at_time)) held right after the last observed
// event, rebased so its reference time is the query time.
IntensitySegment intensity_segment(const PolicyParams& params, const HiddenState& state,
                                   double at_time);

// Softmax mark head over the current hidden state (max-subtracted).
MarkPmf mark_pmf(const PolicyParams& params, const HiddenState& state);

// Exact gradients of the episode log-likelihood and the selected regularizer
// integrals via one reverse pass (backpropagation through time).
GradientBundle episode_backward(const PolicyParams& params, const EpisodeHistory& history,
                                const RegularizerSpec& spec);

// --- parameter plumbing -----------------------------------------------------

struct TensorView {
  const char* name;
  double* data;
  Eigen::Index size;
};
struct TensorConstView {
  const char* name;
  const double* data;
  Eigen::Index size;
};

template <typename Params, typename Fn>
void for_each_tensor_impl(Params& p, Fn&& fn) {
  auto vec = [&](const char* name, auto& v) { fn(name, v.data(), v.size()); };
  vec("time_embed_w", p.time_embed_w);
  vec("time_embed_b", p.time_embed_b);
  if (p.dims.action_marks > 0) {
    vec("action_embed_w", p.action_embed_w);
    vec("action_embed_b", p.action_embed_b);
  }
  if (p.dims.feedback_marks > 0) {
    vec("feedback_embed_w", p.feedback_embed_w);
    vec("feedback_embed_b", p.feedback_embed_b);
  }
  vec("kind_action_w", p.kind_action_w);
  vec("kind_feedback_w", p.kind_feedback_w);
  vec("kind_bias", p.kind_bias);
  vec("recur_w", p.recur_w);
  vec("in_time_w", p.in_time_w);
  if (p.dims.action_marks > 0) vec("in_action_w", p.in_action_w);
  if (p.dims.feedback_marks > 0) vec("in_feedback_w", p.in_feedback_w);
  vec("in_kind_w", p.in_kind_w);
  vec("hidden_bias", p.hidden_bias);
  vec("intensity_w", p.intensity_w);
  fn("intensity_bias", &p.intensity_bias, Eigen::Index{1});
  fn("time_slope", &p.time_slope, Eigen::Index{1});
  if (p.dims.action_marks > 0) vec("mark_w", p.mark_w);
}

template <typename Fn>
void for_each_tensor(PolicyParams& p, Fn&& fn) {
  for_each_tensor_impl(p, [&](const char* name, double* d, Eigen::Index n) {
    fn(TensorView{name, d, n});
  });
}

template <typename Fn>
void for_each_tensor(const PolicyParams& p, Fn&& fn) {
  for_each_tensor_impl(p, [&](const char* name, const double* d, Eigen::Index n) {
    fn(TensorConstView{name, d, n});
  });
}

PolicyParams zeros_like(const PolicyParams& p);
void add_scaled(PolicyParams& dest, const PolicyParams& src, double scale);
void scale_in_place(PolicyParams& p, double scale);
double l2_norm(const PolicyParams& p);
Eigen::Index parameter_count(const PolicyParams& p);
// Returns the name of the first non-finite tensor, or nullptr if all finite.
const char* first_non_finite(const PolicyParams& p);

// Versioned binary checkpoint; round-trips bit-exactly.
void save_checkpoint(const std::string& path, const PolicyParams& params);
PolicyParams load_checkpoint(const std::string& path);

}  // namespace mtpp

#endif
