#include "cft/diagnostics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "cft/harness.hpp"
#include "cft/prompts.hpp"

namespace cft {
namespace {

constexpr int kEvalChunk = 64;

struct Probe {
  PromptSequence prompt;
  Eigen::VectorXd target_grad;
};

// k in-context (x, f(x)) pairs plus an unsupervised query, with grad_g at the
// query as the reference direction.
Probe build_probe(const ComposedTask& task, int k, Rng& input_rng) {
  std::vector<Eigen::VectorXd> xs;
  xs.reserve(k);
  for (int j = 0; j < k; ++j) xs.push_back(sample_input(task.d(), input_rng));
  Eigen::VectorXd query = sample_input(task.d(), input_rng);
  LinearTask f{task.w1};
  PromptSequence p = append_query(build_pretrain_prompt(f, xs), query);
  Probe probe{std::move(p), grad_g(task, query)};
  return probe;
}

double column_mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double column_stderr(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1)) /
         std::sqrt(static_cast<double>(v.size()));
}

}  // namespace

double alignment(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw std::invalid_argument("alignment: size mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) {
    throw std::invalid_argument("alignment: zero vector (degenerate gradient)");
  }
  return a.dot(b) / (na * nb);
}

Matrix query_input_gradients(const Model& m, const std::vector<PromptSequence>& prompts) {
  if (prompts.empty()) throw std::invalid_argument("query_input_gradients: empty batch");
  const int T = prompts[0].length();
  const int d = m.config.d_input;
  for (const auto& p : prompts) {
    if (p.roles.empty() || p.roles.back() != Role::x) {
      throw std::invalid_argument("query_input_gradients: prompt does not end in a query token");
    }
  }
  Matrix out(static_cast<Eigen::Index>(prompts.size()), d);

  std::vector<Tensor> leaves = m.param_tensors();
  for (size_t b0 = 0; b0 < prompts.size(); b0 += kEvalChunk) {
    const size_t b1 = std::min(prompts.size(), b0 + kEvalChunk);
    const int bn = static_cast<int>(b1 - b0);
    std::vector<PromptSequence> chunk(prompts.begin() + b0, prompts.begin() + b1);
    Matrix stacked = stack_prompt_tokens(chunk);

    Tape t;
    Tensor tokens = make_tensor(std::move(stacked), true);
    Tensor y = forward_regression_all(t, m, tokens, bn, T);
    std::vector<int> finals(bn);
    for (int b = 0; b < bn; ++b) finals[b] = b * T + T - 1;
    Tensor picked = gather_rows(t, y, finals);
    Tensor obj = mean_all(t, picked);
    clear_grad(leaves);
    t.backward(obj);

    for (int b = 0; b < bn; ++b) {
      if (has_grad(tokens)) {
        out.row(static_cast<Eigen::Index>(b0) + b) = tokens->grad.row(b * T + T - 1);
      } else {
        out.row(static_cast<Eigen::Index>(b0) + b).setZero();
      }
    }
    clear_grad(leaves);
  }
  return out;
}

Eigen::VectorXd model_input_gradient(const Model& m, const PromptSequence& prompt) {
  Matrix rows = query_input_gradients(m, {prompt});
  return rows.row(0).transpose();
}

TaskSampler linear_task_sampler(int d) {
  return [d](Rng& rng) {
    LinearTask f = sample_linear_task(d, rng);
    return make_multi_linear(f, Eigen::VectorXd::Zero(d));
  };
}

TaskSampler poly_square_sampler(int d) {
  return [d](Rng& rng) { return make_poly_square(sample_linear_task(d, rng)); };
}

TaskSampler multi_linear_sampler(int d) {
  return [d](Rng& rng) {
    LinearTask f = sample_linear_task(d, rng);
    return make_multi_linear(f, sample_input(d, rng));
  };
}

TaskSampler multi_linear_fixed_sampler(int d, Eigen::VectorXd w2) {
  if (w2.size() != d) throw std::invalid_argument("multi_linear_fixed_sampler: w2 size != d");
  return [d, w2 = std::move(w2)](Rng& rng) {
    return make_multi_linear(sample_linear_task(d, rng), w2);
  };
}

TracePoint alignment_point(const Model& m, const TaskSampler& sampler, int k, int eval_batch,
                           uint64_t seed, int64_t step) {
  if (k < 1) throw std::invalid_argument("alignment_point: k must be >= 1");
  if (eval_batch < 1) throw std::invalid_argument("alignment_point: eval_batch must be >= 1");

  std::vector<Probe> probes;
  probes.reserve(eval_batch);
  std::vector<PromptSequence> prompts;
  prompts.reserve(eval_batch);
  for (int i = 0; i < eval_batch; ++i) {
    Rng task_rng = make_stream(seed, "align.task", static_cast<uint64_t>(i));
    Rng input_rng = make_stream(seed, "align.inputs", static_cast<uint64_t>(i));
    ComposedTask task = sampler(task_rng);
    probes.push_back(build_probe(task, k, input_rng));
    prompts.push_back(probes.back().prompt);
  }

  Matrix grads = query_input_gradients(m, prompts);

  TracePoint pt;
  pt.step = step;
  std::vector<double> vals;
  vals.reserve(eval_batch);
  for (int i = 0; i < eval_batch; ++i) {
    const Eigen::VectorXd g = grads.row(i).transpose();
    if (g.norm() == 0.0) {
      pt.n_degenerate += 1;
      continue;
    }
    vals.push_back(alignment(g, probes[i].target_grad));
  }
  pt.n_used = static_cast<int>(vals.size());
  if (!vals.empty()) {
    pt.mean = column_mean(vals);
    pt.stderr_mean = column_stderr(vals, pt.mean);
  }
  return pt;
}

AlignmentTrace alignment_trace(const std::vector<std::pair<int64_t, const Model*>>& checkpoints,
                               const TaskSampler& sampler, int k, int eval_batch, uint64_t seed) {
  AlignmentTrace trace;
  trace.points.reserve(checkpoints.size());
  for (const auto& [step, model] : checkpoints) {
    if (model == nullptr) throw std::invalid_argument("alignment_trace: null model");
    trace.points.push_back(alignment_point(*model, sampler, k, eval_batch, seed, step));
  }
  return trace;
}

ErrorCurve error_curve(const Model& m, const TaskSampler& sampler, int k_max, int n_prompts,
                       uint64_t seed) {
  if (k_max < 1) throw std::invalid_argument("error_curve: k_max must be >= 1");
  if (n_prompts < 1) throw std::invalid_argument("error_curve: n_prompts must be >= 1");
  const int d = m.config.d_input;
  const int T = 2 * k_max + 1;
  if (T > m.config.max_sequence_length) {
    throw std::invalid_argument("error_curve: k_max exceeds the model's sequence budget");
  }

  // errs(p, i): normalized squared error of prompt p after i pairs.
  Matrix errs(n_prompts, k_max + 1);
  Tape t(false);
  for (int p0 = 0; p0 < n_prompts; p0 += kEvalChunk) {
    const int p1 = std::min(n_prompts, p0 + kEvalChunk);
    const int bn = p1 - p0;
    std::vector<PromptSequence> chunk;
    chunk.reserve(bn);
    for (int p = p0; p < p1; ++p) {
      Rng task_rng = make_stream(seed, "curve.task", static_cast<uint64_t>(p));
      Rng input_rng = make_stream(seed, "curve.inputs", static_cast<uint64_t>(p));
      ComposedTask task = sampler(task_rng);
      std::vector<Eigen::VectorXd> xs;
      xs.reserve(k_max);
      for (int j = 0; j < k_max; ++j) xs.push_back(sample_input(d, input_rng));
      Eigen::VectorXd query = sample_input(d, input_rng);
      PromptSequence prompt =
          append_query(build_cpt_prompt(task, xs), query, eval_g(task, query));
      chunk.push_back(std::move(prompt));
    }
    Matrix stacked = stack_prompt_tokens(chunk);
    Tensor y = forward_regression_all(t, m, make_tensor(std::move(stacked)), bn, T);
    for (int b = 0; b < bn; ++b) {
      for (int i = 0; i <= k_max; ++i) {
        const int pos = 2 * i;  // x-position holding x_{i+1}
        const double pred = y->value(b * T + pos, 0);
        const double r = pred - chunk[b].targets[pos];
        errs(p0 + b, i) = r * r / static_cast<double>(d);
      }
    }
  }

  ErrorCurve curve;
  curve.n_prompts = n_prompts;
  curve.mean.resize(k_max + 1);
  curve.stderr_mean.resize(k_max + 1);
  for (int i = 0; i <= k_max; ++i) {
    std::vector<double> col(n_prompts);
    for (int p = 0; p < n_prompts; ++p) col[p] = errs(p, i);
    curve.mean[i] = column_mean(col);
    curve.stderr_mean[i] = column_stderr(col, curve.mean[i]);
  }
  return curve;
}

void write_trace_csv(const std::string& path, const std::string& run_id,
                     const AlignmentTrace& trace) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# schema_version=" << kSchemaVersion << "\n";
  out << "run_id,step,mean,stderr,n,degenerate\n";
  char buf[96];
  for (const auto& p : trace.points) {
    std::snprintf(buf, sizeof buf, ",%lld,%.17g,%.17g,%d,%d", static_cast<long long>(p.step),
                  p.mean, p.stderr_mean, p.n_used, p.n_degenerate);
    out << run_id << buf << "\n";
  }
}

void write_curve_csv(const std::string& path, const std::string& run_id, const ErrorCurve& curve) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# schema_version=" << kSchemaVersion << "\n";
  out << "run_id,i,mean,stderr,n\n";
  char buf[96];
  for (size_t i = 0; i < curve.mean.size(); ++i) {
    std::snprintf(buf, sizeof buf, ",%zu,%.17g,%.17g,%d", i, curve.mean[i], curve.stderr_mean[i],
                  curve.n_prompts);
    out << run_id << buf << "\n";
  }
}

}  // namespace cft
