#include "cft/tasks.hpp"

#include <stdexcept>
#include <utility>

namespace cft {
namespace {

void check_dim(int task_d, const Eigen::VectorXd& x, const char* what) {
  if (static_cast<int>(x.size()) != task_d) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (task d=" +
                                std::to_string(task_d) + ", x has " +
                                std::to_string(x.size()) + ")");
  }
}

}  // namespace

Eigen::VectorXd sample_input(int d, Rng& rng) {
  if (d < 1) throw std::invalid_argument("sample_input: d must be >= 1");
  Eigen::VectorXd x(d);
  for (int i = 0; i < d; ++i) x(i) = rng.normal();
  return x;
}

LinearTask sample_linear_task(int d, Rng& rng) { return LinearTask{sample_input(d, rng)}; }

ComposedTask make_poly_square(const LinearTask& f) {
  return ComposedTask{GVariant::poly_square, f.w, f.w};
}

ComposedTask make_poly_square_decoupled(const LinearTask& f, Eigen::VectorXd w2) {
  if (w2.size() != f.w.size()) {
    throw std::invalid_argument("make_poly_square_decoupled: w2 dimension mismatch");
  }
  return ComposedTask{GVariant::poly_square, f.w, std::move(w2)};
}

ComposedTask make_multi_linear(const LinearTask& f, Eigen::VectorXd w2) {
  if (w2.size() != f.w.size()) {
    throw std::invalid_argument("make_multi_linear: w2 dimension mismatch");
  }
  return ComposedTask{GVariant::multi_linear, f.w, std::move(w2)};
}

double eval_f(const LinearTask& task, const Eigen::VectorXd& x) {
  check_dim(task.d(), x, "eval_f");
  return task.w.dot(x);
}

double eval_g(const ComposedTask& task, const Eigen::VectorXd& x) {
  check_dim(task.d(), x, "eval_g");
  const double lin = task.w1.dot(x);
  switch (task.variant) {
    case GVariant::poly_square: {
      const double s = task.w2.dot(x);
      return lin + s * s;
    }
    case GVariant::multi_linear:
      return lin + task.w2.dot(x);
  }
  throw std::logic_error("eval_g: unknown variant");
}

Eigen::VectorXd grad_g(const ComposedTask& task, const Eigen::VectorXd& x) {
  check_dim(task.d(), x, "grad_g");
  switch (task.variant) {
    case GVariant::poly_square:
      return task.w1 + 2.0 * task.w2.dot(x) * task.w2;
    case GVariant::multi_linear:
      return task.w1 + task.w2;
  }
  throw std::logic_error("grad_g: unknown variant");
}

}  // namespace cft
