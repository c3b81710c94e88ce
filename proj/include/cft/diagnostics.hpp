#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cft/tasks.hpp"
#include "cft/transformer.hpp"

namespace cft {

// Normalized inner product (cosine). Zero vectors are rejected: a zero
// gradient carries no direction, so callers must treat it as degenerate.
double alignment(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Gradient of the model output at the final prompt position with respect to
// that position's input row. The final token must be an x-token (a query).
// Parameter gradients touched along the way are cleared before returning.
Eigen::VectorXd model_input_gradient(const Model& m, const PromptSequence& prompt);

// Gradient rows at each prompt's final position, one row per prompt. Rows are
// scaled by an internal batching constant: directions are exact, magnitudes
// are only meaningful relative to rows of the same call.
Matrix query_input_gradients(const Model& m, const std::vector<PromptSequence>& prompts);

using TaskSampler = std::function<ComposedTask(Rng&)>;

TaskSampler linear_task_sampler(int d);  // g == f (zero second component)
TaskSampler poly_square_sampler(int d);
TaskSampler multi_linear_sampler(int d);  // fresh w2 per draw
TaskSampler multi_linear_fixed_sampler(int d, Eigen::VectorXd w2);

struct TracePoint {
  int64_t step = 0;
  double mean = 0.0;         // 0 when every prompt was degenerate
  double stderr_mean = 0.0;  // sample stddev / sqrt(n_used)
  int n_used = 0;
  int n_degenerate = 0;
};

struct AlignmentTrace {
  std::vector<TracePoint> points;
};

// Mean alignment between the model's query-input gradient and grad_g over
// eval_batch fresh prompts (k in-context (x, f(x)) pairs plus a query).
// The probe set depends only on (seed, prompt index), so matched seeds see
// identical probes at every checkpoint and across arms.
TracePoint alignment_point(const Model& m, const TaskSampler& sampler, int k, int eval_batch,
                           uint64_t seed, int64_t step);

AlignmentTrace alignment_trace(const std::vector<std::pair<int64_t, const Model*>>& checkpoints,
                               const TaskSampler& sampler, int k, int eval_batch, uint64_t seed);

struct ErrorCurve {
  std::vector<double> mean;  // index i: normalized error after i in-context pairs
  std::vector<double> stderr_mean;
  int n_prompts = 0;
};

// For each i in 0..k_max, mean over n_prompts of (prediction after i pairs
// minus g(x_{i+1}))^2 / d. One forward per prompt covers every prefix.
ErrorCurve error_curve(const Model& m, const TaskSampler& sampler, int k_max, int n_prompts,
                       uint64_t seed);

void write_trace_csv(const std::string& path, const std::string& run_id,
                     const AlignmentTrace& trace);
void write_curve_csv(const std::string& path, const std::string& run_id, const ErrorCurve& curve);

}  // namespace cft
