#include "cft/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

#include "cft/prompts.hpp"
#include "cft/rng.hpp"
#include "cft/tasks.hpp"
#include "cft/train.hpp"
#include "cft/transformer.hpp"

namespace cft {

GradCheckReport finite_diff_check(const std::function<Tensor(Tape&)>& loss_fn,
                                  const std::vector<std::pair<std::string, Tensor>>& params,
                                  double epsilon, double tolerance) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) {
    throw std::invalid_argument("finite_diff_check: epsilon must lie in [1e-7, 1e-3]");
  }
  GradCheckReport report;
  report.epsilon = epsilon;
  report.tolerance = tolerance;

  std::vector<Tensor> leaves;
  leaves.reserve(params.size());
  for (const auto& [name, p] : params) leaves.push_back(p);
  clear_grad(leaves);

  std::vector<Matrix> analytic(params.size());
  {
    Tape tape;
    Tensor loss = loss_fn(tape);
    tape.backward(loss);
    for (size_t i = 0; i < params.size(); ++i) {
      const Tensor& p = params[i].second;
      analytic[i] = has_grad(p) ? p->grad
                                : Matrix::Zero(p->value.rows(), p->value.cols());
    }
  }

  auto eval = [&]() -> double {
    Tape tape(/*grad_enabled=*/false);
    return loss_fn(tape)->value(0, 0);
  };

  report.pass = true;
  for (size_t i = 0; i < params.size(); ++i) {
    const Tensor& p = params[i].second;
    GradCheckEntry entry{params[i].first, 0.0};
    for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) {
        const double saved = p->value(r, c);
        p->value(r, c) = saved + epsilon;
        const double fp = eval();
        p->value(r, c) = saved - epsilon;
        const double fm = eval();
        p->value(r, c) = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
          report.pass = false;
          report.note = entry.name + "[" + std::to_string(r) + "," + std::to_string(c) +
                        "]: non-finite function value";
          report.per_param.push_back(entry);
          return report;
        }
        const double fd = (fp - fm) / (2.0 * epsilon);
        const double an = analytic[i](r, c);
        const double rel =
            std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8});
        entry.max_rel_err = std::max(entry.max_rel_err, rel);
      }
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.per_param.push_back(std::move(entry));
  }
  report.pass = report.max_rel_err <= tolerance;
  return report;
}

namespace {

Matrix random_matrix(Rng& rng, int rows, int cols) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.normal();
  return m;
}

Tensor leaf(Rng& rng, int rows, int cols) {
  return make_tensor(random_matrix(rng, rows, cols), /*requires_grad=*/true);
}

// Reduces an arbitrary output to a scalar with distinct per-coordinate
// weights, so a sign flip or transposition in any backward rule shows up.
Tensor weighted_mean(Tape& t, const Tensor& out, const Tensor& weights) {
  return mean_all(t, mul(t, out, weights));
}

// Near-init attention gradients sit at the finite-difference noise floor;
// nudging every parameter off the symmetric start keeps the comparison
// meaningful.
void jitter_params(Model& m, Rng& rng) {
  for (auto& [name, p] : m.params) {
    double* data = p->value.data();
    for (Eigen::Index i = 0; i < p->value.size(); ++i) data[i] += 0.3 * rng.normal();
  }
}

}  // namespace

std::vector<AuditCase> standard_gradient_audit(double tolerance) {
  std::vector<AuditCase> cases;
  Rng rng = make_stream(7, "gradient.audit");
  auto fixed = [&rng](int rows, int cols) {
    return make_tensor(random_matrix(rng, rows, cols));
  };
  auto run = [&cases, tolerance](const std::string& name,
                                 const std::function<Tensor(Tape&)>& loss_fn,
                                 const std::vector<std::pair<std::string, Tensor>>& params,
                                 double epsilon = 1e-5) {
    cases.push_back({name, finite_diff_check(loss_fn, params, epsilon, tolerance)});
  };
  // Full-network cases use a wider step: the key bias has an exactly-zero
  // gradient (softmax is shift-invariant), so its finite difference is pure
  // roundoff, which shrinks with 1/epsilon while everything else stays far
  // below tolerance.
  const double net_eps = 2e-4;

  {
    Tensor a = leaf(rng, 3, 4), b = leaf(rng, 4, 2), w = fixed(3, 2);
    run("matmul", [=](Tape& t) { return weighted_mean(t, matmul(t, a, b), w); },
        {{"a", a}, {"b", b}});
  }
  {
    Tensor a = leaf(rng, 3, 4), b = leaf(rng, 3, 4), w = fixed(3, 4);
    run("add", [=](Tape& t) { return weighted_mean(t, add(t, a, b), w); },
        {{"a", a}, {"b", b}});
  }
  {
    Tensor a = leaf(rng, 3, 4), bias = leaf(rng, 1, 4), w = fixed(3, 4);
    run("add_bias_row", [=](Tape& t) { return weighted_mean(t, add(t, a, bias), w); },
        {{"a", a}, {"bias", bias}});
  }
  {
    Tensor a = leaf(rng, 3, 4), b = leaf(rng, 3, 4), w = fixed(3, 4);
    run("sub", [=](Tape& t) { return weighted_mean(t, sub(t, a, b), w); },
        {{"a", a}, {"b", b}});
  }
  {
    Tensor a = leaf(rng, 3, 4), b = leaf(rng, 3, 4), w = fixed(3, 4);
    run("mul", [=](Tape& t) { return weighted_mean(t, mul(t, a, b), w); },
        {{"a", a}, {"b", b}});
  }
  {
    Tensor a = leaf(rng, 3, 4), w = fixed(3, 4);
    run("scale", [=](Tape& t) { return weighted_mean(t, scale(t, a, -1.7), w); },
        {{"a", a}});
  }
  {
    Tensor a = leaf(rng, 3, 5), w = fixed(5, 3);
    run("transpose", [=](Tape& t) { return weighted_mean(t, transpose(t, a), w); },
        {{"a", a}});
  }
  {
    Tensor a = leaf(rng, 4, 6), w = fixed(4, 6);
    run("softmax_rows", [=](Tape& t) { return weighted_mean(t, softmax_rows(t, a), w); },
        {{"a", a}});
  }
  {
    Tensor a = leaf(rng, 4, 6), w = fixed(4, 6);
    run("log_softmax_rows",
        [=](Tape& t) { return weighted_mean(t, log_softmax_rows(t, a), w); }, {{"a", a}});
  }
  {
    Tensor x = leaf(rng, 4, 8), w = fixed(4, 8);
    Tensor gain = make_tensor(Matrix::Ones(1, 8) + 0.1 * random_matrix(rng, 1, 8), true);
    Tensor bias = leaf(rng, 1, 8);
    run("layer_norm_rows",
        [=](Tape& t) {
          return weighted_mean(t, layer_norm_rows(t, x, gain, bias), w);
        },
        {{"x", x}, {"gain", gain}, {"bias", bias}});
  }
  {
    Tensor a = leaf(rng, 3, 5), w = fixed(3, 5);
    run("gelu", [=](Tape& t) { return weighted_mean(t, gelu(t, a), w); }, {{"a", a}});
  }
  {
    // Repeated ids exercise gradient accumulation into one table row.
    Tensor table = leaf(rng, 6, 4), w = fixed(6, 4);
    std::vector<int> ids{1, 4, 1, 0, 5, 1};
    run("gather_rows",
        [=](Tape& t) { return weighted_mean(t, gather_rows(t, table, ids), w); },
        {{"table", table}});
  }
  {
    Tensor a = leaf(rng, 2, 3), b = leaf(rng, 4, 3), w = fixed(6, 3);
    run("concat_rows", [=](Tape& t) { return weighted_mean(t, concat_rows(t, a, b), w); },
        {{"a", a}, {"b", b}});
  }
  {
    Tensor a = leaf(rng, 3, 2), b = leaf(rng, 3, 4), w = fixed(3, 6);
    run("concat_cols", [=](Tape& t) { return weighted_mean(t, concat_cols(t, a, b), w); },
        {{"a", a}, {"b", b}});
  }
  {
    Tensor a = leaf(rng, 2, 3), b = leaf(rng, 1, 3), c = leaf(rng, 3, 3),
           d = leaf(rng, 2, 3), w = fixed(8, 3);
    run("concat_rows_many",
        [=](Tape& t) {
          return weighted_mean(t, concat_rows_many(t, {a, b, c, d}), w);
        },
        {{"a", a}, {"b", b}, {"c", c}, {"d", d}});
  }
  {
    Tensor a = leaf(rng, 4, 1), b = leaf(rng, 4, 2), c = leaf(rng, 4, 3), w = fixed(4, 6);
    run("concat_cols_many",
        [=](Tape& t) { return weighted_mean(t, concat_cols_many(t, {a, b, c}), w); },
        {{"a", a}, {"b", b}, {"c", c}});
  }
  {
    Tensor a = leaf(rng, 6, 3), w = fixed(4, 3);
    run("slice_rows", [=](Tape& t) { return weighted_mean(t, slice_rows(t, a, 1, 4), w); },
        {{"a", a}});
  }
  {
    Tensor a = leaf(rng, 3, 6), w = fixed(3, 3);
    run("slice_cols", [=](Tape& t) { return weighted_mean(t, slice_cols(t, a, 2, 3), w); },
        {{"a", a}});
  }
  {
    Tensor a = leaf(rng, 4, 5);
    run("mean_all", [=](Tape& t) { return mean_all(t, a); }, {{"a", a}});
  }
  {
    Tensor a = leaf(rng, 3, 4), b = leaf(rng, 3, 4);
    run("squared_error", [=](Tape& t) { return squared_error(t, a, b); },
        {{"a", a}, {"b", b}});
  }
  {
    Tensor a = leaf(rng, 5, 7);
    std::vector<int> cols{3, 0, 6, 2, 5};
    run("pick_rows", [=](Tape& t) { return mean_all(t, pick_rows(t, a, cols)); },
        {{"a", a}});
  }

  {
    ModelConfig mc;
    mc.n_layers = 1;
    mc.n_heads = 2;
    mc.d_model = 8;
    mc.d_input = 3;
    mc.max_sequence_length = 8;
    mc.readout = Readout::scalar;
    auto model = std::make_shared<Model>(Model::init(mc, 11));
    jitter_params(*model, rng);
    const int batch = 2, seq = 6;
    Tensor tokens = leaf(rng, batch * seq, mc.d_input);
    Tensor w = fixed(batch * seq, 1);
    auto params = model->params;
    params.emplace_back("tokens", tokens);
    run("transformer_scalar",
        [=](Tape& t) {
          return weighted_mean(t, forward_regression_all(t, *model, tokens, batch, seq), w);
        },
        params, net_eps);
  }
  {
    ModelConfig mc;
    mc.n_layers = 1;
    mc.n_heads = 2;
    mc.d_model = 8;
    mc.d_input = 11;
    mc.max_sequence_length = 8;
    mc.readout = Readout::vocabulary;
    auto model = std::make_shared<Model>(Model::init(mc, 12));
    jitter_params(*model, rng);
    const int batch = 2, seq = 5;
    std::vector<int> ids;
    for (int i = 0; i < batch * seq; ++i) ids.push_back(static_cast<int>(rng.below(11)));
    Tensor w = fixed(batch * seq, 11);
    run("transformer_vocab",
        [=](Tape& t) {
          return weighted_mean(t, forward_tokens_all(t, *model, ids, batch, seq), w);
        },
        model->params, net_eps);
  }

  {
    ModelConfig mc;
    mc.n_layers = 1;
    mc.n_heads = 2;
    mc.d_model = 8;
    mc.d_input = 2;
    mc.max_sequence_length = 12;
    mc.readout = Readout::scalar;
    auto model = std::make_shared<Model>(Model::init(mc, 13));
    jitter_params(*model, rng);
    const int d = 2, k = 2;
    auto prompts = std::make_shared<std::vector<PromptSequence>>();
    for (int b = 0; b < 2; ++b) {
      LinearTask f = sample_linear_task(d, rng);
      ComposedTask g = make_poly_square(f);
      std::vector<Eigen::VectorXd> xs;
      for (int i = 0; i < k; ++i) xs.push_back(sample_input(d, rng));
      prompts->push_back(build_cft_prompt(f, g, xs));
    }
    run("regression_loss",
        [=](Tape& t) { return regression_loss(t, *model, *prompts); }, model->params,
        net_eps);
  }
  {
    ModelConfig mc;
    mc.n_layers = 1;
    mc.n_heads = 2;
    mc.d_model = 8;
    mc.d_input = 11;
    mc.max_sequence_length = 8;
    mc.readout = Readout::vocabulary;
    auto model = std::make_shared<Model>(Model::init(mc, 14));
    jitter_params(*model, rng);
    auto rows = std::make_shared<TokenRows>();
    rows->batch = 2;
    rows->seq_len = 6;
    for (int i = 0; i < rows->batch * rows->seq_len; ++i) {
      rows->ids.push_back(static_cast<int>(rng.below(11)));
      const bool head = i % rows->seq_len == 0;
      rows->loss_mask.push_back(head ? 0 : static_cast<uint8_t>(rng.below(2)));
    }
    rows->loss_mask[1] = 1;  // at least one supervised position per row
    rows->loss_mask[rows->seq_len + 1] = 1;
    run("token_loss", [=](Tape& t) { return token_loss(t, *model, *rows); },
        model->params, net_eps);
  }

  return cases;
}

bool audit_passed(const std::vector<AuditCase>& cases) {
  for (const auto& c : cases)
    if (!c.report.pass) return false;
  return !cases.empty();
}

}  // namespace cft
