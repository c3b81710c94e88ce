#pragma once

#include <Eigen/Dense>

#include "cft/rng.hpp"

namespace cft {

// f(x) = w^T x with w ~ N(0, I_d).
struct LinearTask {
  Eigen::VectorXd w;
  int d() const { return static_cast<int>(w.size()); }
};

enum class GVariant { poly_square, multi_linear };

// g(x) = w1^T x + (w2^T x)^2   (poly_square; w2 == w1 unless decoupled)
// g(x) = w1^T x + w2^T x       (multi_linear)
struct ComposedTask {
  GVariant variant;
  Eigen::VectorXd w1;
  Eigen::VectorXd w2;
  int d() const { return static_cast<int>(w1.size()); }
};

Eigen::VectorXd sample_input(int d, Rng& rng);
LinearTask sample_linear_task(int d, Rng& rng);

ComposedTask make_poly_square(const LinearTask& f);
// The decoupled reading keeps f in the linear term but squares an
// independent direction; exposed for exploration, not the default.
ComposedTask make_poly_square_decoupled(const LinearTask& f, Eigen::VectorXd w2);
ComposedTask make_multi_linear(const LinearTask& f, Eigen::VectorXd w2);

double eval_f(const LinearTask& task, const Eigen::VectorXd& x);
double eval_g(const ComposedTask& task, const Eigen::VectorXd& x);
Eigen::VectorXd grad_g(const ComposedTask& task, const Eigen::VectorXd& x);

}  // namespace cft
