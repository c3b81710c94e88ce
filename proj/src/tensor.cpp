#include "cft/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace cft {
namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

std::string shape_of(const Tensor& t) {
  std::ostringstream os;
  os << t->value.rows() << "x" << t->value.cols();
  return os.str();
}

// Lazily-allocated accumulation: grads stay empty until first touched.
template <typename Expr>
void accum(const Tensor& t, const Expr& g) {
  if (t->grad.size() == 0) {
    t->grad = g;
  } else {
    t->grad += g;
  }
}

bool want_grad(const Tape& t, std::initializer_list<const Tensor*> ins) {
  if (!t.grad_enabled()) return false;
  for (const Tensor* p : ins) {
    if ((*p)->requires_grad) return true;
  }
  return false;
}

}  // namespace

Tensor make_tensor(Matrix value, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

void clear_grad(const std::vector<Tensor>& tensors) {
  for (const Tensor& t : tensors) t->grad.resize(0, 0);
}

void Tape::record(Tensor out, std::vector<Tensor> inputs, std::function<void()> backward) {
  records_.push_back({std::move(out), std::move(inputs), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (loss->value.rows() != 1 || loss->value.cols() != 1) {
    fail("backward: loss must be scalar (1x1), got " + shape_of(loss));
  }
  loss->grad = Matrix::Ones(1, 1);
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->out->grad.size() != 0) it->fn();
  }
  // Participating-but-unreachable leaves still get a (zero) gradient.
  for (const auto& r : records_) {
    for (const Tensor& in : r.inputs) {
      if (in->requires_grad && in->grad.size() == 0) {
        in->grad = Matrix::Zero(in->value.rows(), in->value.cols());
      }
    }
  }
}

Tensor matmul(Tape& t, const Tensor& a, const Tensor& b) {
  if (a->value.cols() != b->value.rows()) {
    fail("matmul: inner dimensions disagree (" + shape_of(a) + " vs " + shape_of(b) + ")");
  }
  Matrix v(a->value.rows(), b->value.cols());
  v.noalias() = a->value * b->value;
  Tensor out = make_tensor(std::move(v), want_grad(t, {&a, &b}));
  if (out->requires_grad) {
    t.record(out, {a, b}, [a, b, out] {
      if (a->requires_grad) accum(a, out->grad * b->value.transpose());
      if (b->requires_grad) accum(b, a->value.transpose() * out->grad);
    });
  }
  return out;
}

Tensor add(Tape& t, const Tensor& a, const Tensor& b) {
  const bool same = a->value.rows() == b->value.rows() && a->value.cols() == b->value.cols();
  const bool bias = !same && b->value.rows() == 1 && b->value.cols() == a->value.cols();
  if (!same && !bias) {
    fail("add: shapes incompatible (" + shape_of(a) + " vs " + shape_of(b) + ")");
  }
  Matrix v = same ? Matrix(a->value + b->value)
                  : Matrix(a->value.rowwise() + b->value.row(0));
  Tensor out = make_tensor(std::move(v), want_grad(t, {&a, &b}));
  if (out->requires_grad) {
    t.record(out, {a, b}, [a, b, out, same] {
      if (a->requires_grad) accum(a, out->grad);
      if (b->requires_grad) {
        if (same) {
          accum(b, out->grad);
        } else {
          accum(b, out->grad.colwise().sum());
        }
      }
    });
  }
  return out;
}

Tensor sub(Tape& t, const Tensor& a, const Tensor& b) {
  if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols()) {
    fail("sub: shapes differ (" + shape_of(a) + " vs " + shape_of(b) + ")");
  }
  Tensor out = make_tensor(a->value - b->value, want_grad(t, {&a, &b}));
  if (out->requires_grad) {
    t.record(out, {a, b}, [a, b, out] {
      if (a->requires_grad) accum(a, out->grad);
      if (b->requires_grad) accum(b, -out->grad);
    });
  }
  return out;
}

Tensor mul(Tape& t, const Tensor& a, const Tensor& b) {
  if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols()) {
    fail("mul: shapes differ (" + shape_of(a) + " vs " + shape_of(b) + ")");
  }
  Tensor out = make_tensor(a->value.cwiseProduct(b->value), want_grad(t, {&a, &b}));
  if (out->requires_grad) {
    t.record(out, {a, b}, [a, b, out] {
      if (a->requires_grad) accum(a, out->grad.cwiseProduct(b->value));
      if (b->requires_grad) accum(b, out->grad.cwiseProduct(a->value));
    });
  }
  return out;
}

Tensor scale(Tape& t, const Tensor& a, double s) {
  Tensor out = make_tensor(a->value * s, want_grad(t, {&a}));
  if (out->requires_grad) {
    t.record(out, {a}, [a, out, s] { accum(a, out->grad * s); });
  }
  return out;
}

Tensor transpose(Tape& t, const Tensor& a) {
  Tensor out = make_tensor(a->value.transpose(), want_grad(t, {&a}));
  if (out->requires_grad) {
    t.record(out, {a}, [a, out] { accum(a, out->grad.transpose()); });
  }
  return out;
}

Tensor softmax_rows(Tape& t, const Tensor& a) {
  Matrix v = a->value;
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    double mx = v.row(i).maxCoeff();
    v.row(i) = (v.row(i).array() - mx).exp();
    v.row(i) /= v.row(i).sum();
  }
  Tensor out = make_tensor(std::move(v), want_grad(t, {&a}));
  if (out->requires_grad) {
    t.record(out, {a}, [a, out] {
      const Matrix& y = out->value;
      const Matrix& d = out->grad;
      Eigen::VectorXd s = d.cwiseProduct(y).rowwise().sum();
      accum(a, y.cwiseProduct(d.colwise() - s));
    });
  }
  return out;
}

Tensor log_softmax_rows(Tape& t, const Tensor& a) {
  Matrix v = a->value;
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    double mx = v.row(i).maxCoeff();
    double lse = mx + std::log((v.row(i).array() - mx).exp().sum());
    v.row(i).array() -= lse;
  }
  Tensor out = make_tensor(std::move(v), want_grad(t, {&a}));
  if (out->requires_grad) {
    t.record(out, {a}, [a, out] {
      const Matrix& d = out->grad;
      Eigen::VectorXd s = d.rowwise().sum();
      Matrix p = out->value.array().exp();
      accum(a, d - Matrix(p.array().colwise() * s.array()));
    });
  }
  return out;
}

Tensor layer_norm_rows(Tape& t, const Tensor& x, const Tensor& gain, const Tensor& bias,
                       double eps) {
  const Eigen::Index n = x->value.cols();
  if (gain->value.rows() != 1 || gain->value.cols() != n || bias->value.rows() != 1 ||
      bias->value.cols() != n) {
    fail("layer_norm_rows: gain/bias must be 1x" + std::to_string(n) + " (got " +
         shape_of(gain) + ", " + shape_of(bias) + ")");
  }
  Eigen::VectorXd mu = x->value.rowwise().mean();
  Matrix xc = x->value.colwise() - mu;
  Eigen::VectorXd inv_std = (xc.array().square().rowwise().mean() + eps).rsqrt();
  Matrix xhat = xc.array().colwise() * inv_std.array();
  Eigen::RowVectorXd g = gain->value.row(0);
  Eigen::RowVectorXd b = bias->value.row(0);
  Matrix v = (xhat.array().rowwise() * g.array()).rowwise() + b.array();
  Tensor out = make_tensor(std::move(v), want_grad(t, {&x, &gain, &bias}));
  if (out->requires_grad) {
    t.record(out, {x, gain, bias}, [x, gain, bias, out, xhat, inv_std] {
      const Matrix& d = out->grad;
      if (gain->requires_grad) accum(gain, d.cwiseProduct(xhat).colwise().sum());
      if (bias->requires_grad) accum(bias, d.colwise().sum());
      if (x->requires_grad) {
        Eigen::RowVectorXd g = gain->value.row(0);
        Matrix dxhat = d.array().rowwise() * g.array();
        Eigen::VectorXd m1 = dxhat.rowwise().mean();
        Eigen::VectorXd m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
        Matrix tmp = dxhat.colwise() - m1;
        tmp.array() -= xhat.array().colwise() * m2.array();
        accum(x, (tmp.array().colwise() * inv_std.array()).matrix());
      }
    });
  }
  return out;
}

Tensor gelu(Tape& t, const Tensor& a) {
  Matrix v = a->value.unaryExpr(
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); });
  Tensor out = make_tensor(std::move(v), want_grad(t, {&a}));
  if (out->requires_grad) {
    t.record(out, {a}, [a, out] {
      Matrix slope = a->value.unaryExpr([](double x) {
        return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
               x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
      });
      accum(a, out->grad.cwiseProduct(slope));
    });
  }
  return out;
}

Tensor gather_rows(Tape& t, const Tensor& table, const std::vector<int>& ids) {
  for (int id : ids) {
    if (id < 0 || id >= table->value.rows()) {
      fail("gather_rows: index " + std::to_string(id) + " out of range [0, " +
           std::to_string(table->value.rows()) + ")");
    }
  }
  Matrix v(static_cast<Eigen::Index>(ids.size()), table->value.cols());
  for (size_t r = 0; r < ids.size(); ++r) v.row(r) = table->value.row(ids[r]);
  Tensor out = make_tensor(std::move(v), want_grad(t, {&table}));
  if (out->requires_grad) {
    t.record(out, {table}, [table, out, ids] {
      if (table->grad.size() == 0) {
        table->grad = Matrix::Zero(table->value.rows(), table->value.cols());
      }
      for (size_t r = 0; r < ids.size(); ++r) {
        table->grad.row(ids[r]) += out->grad.row(r);
      }
    });
  }
  return out;
}

Tensor concat_rows(Tape& t, const Tensor& a, const Tensor& b) {
  if (a->value.cols() != b->value.cols()) {
    fail("concat_rows: column counts differ (" + shape_of(a) + " vs " + shape_of(b) + ")");
  }
  Matrix v(a->value.rows() + b->value.rows(), a->value.cols());
  v.topRows(a->value.rows()) = a->value;
  v.bottomRows(b->value.rows()) = b->value;
  Tensor out = make_tensor(std::move(v), want_grad(t, {&a, &b}));
  if (out->requires_grad) {
    t.record(out, {a, b}, [a, b, out] {
      if (a->requires_grad) accum(a, out->grad.topRows(a->value.rows()));
      if (b->requires_grad) accum(b, out->grad.bottomRows(b->value.rows()));
    });
  }
  return out;
}

Tensor concat_cols(Tape& t, const Tensor& a, const Tensor& b) {
  if (a->value.rows() != b->value.rows()) {
    fail("concat_cols: row counts differ (" + shape_of(a) + " vs " + shape_of(b) + ")");
  }
  Matrix v(a->value.rows(), a->value.cols() + b->value.cols());
  v.leftCols(a->value.cols()) = a->value;
  v.rightCols(b->value.cols()) = b->value;
  Tensor out = make_tensor(std::move(v), want_grad(t, {&a, &b}));
  if (out->requires_grad) {
    t.record(out, {a, b}, [a, b, out] {
      if (a->requires_grad) accum(a, out->grad.leftCols(a->value.cols()));
      if (b->requires_grad) accum(b, out->grad.rightCols(b->value.cols()));
    });
  }
  return out;
}

Tensor slice_rows(Tape& t, const Tensor& a, int start, int count) {
  if (start < 0 || count < 1 || start + count > a->value.rows()) {
    fail("slice_rows: range [" + std::to_string(start) + ", " +
         std::to_string(start + count) + ") invalid for " + shape_of(a));
  }
  Tensor out = make_tensor(a->value.middleRows(start, count), want_grad(t, {&a}));
  if (out->requires_grad) {
    t.record(out, {a}, [a, out, start, count] {
      if (a->grad.size() == 0) a->grad = Matrix::Zero(a->value.rows(), a->value.cols());
      a->grad.middleRows(start, count) += out->grad;
    });
  }
  return out;
}

Tensor slice_cols(Tape& t, const Tensor& a, int start, int count) {
  if (start < 0 || count < 1 || start + count > a->value.cols()) {
    fail("slice_cols: range [" + std::to_string(start) + ", " +
         std::to_string(start + count) + ") invalid for " + shape_of(a));
  }
  Tensor out = make_tensor(a->value.middleCols(start, count), want_grad(t, {&a}));
  if (out->requires_grad) {
    t.record(out, {a}, [a, out, start, count] {
      if (a->grad.size() == 0) a->grad = Matrix::Zero(a->value.rows(), a->value.cols());
      a->grad.middleCols(start, count) += out->grad;
    });
  }
  return out;
}

Tensor mean_all(Tape& t, const Tensor& a) {
  Matrix v(1, 1);
  v(0, 0) = a->value.mean();
  Tensor out = make_tensor(std::move(v), want_grad(t, {&a}));
  if (out->requires_grad) {
    t.record(out, {a}, [a, out] {
      double d = out->grad(0, 0) / static_cast<double>(a->value.size());
      accum(a, Matrix::Constant(a->value.rows(), a->value.cols(), d));
    });
  }
  return out;
}

Tensor squared_error(Tape& t, const Tensor& a, const Tensor& b) {
  if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols()) {
    fail("squared_error: shapes differ (" + shape_of(a) + " vs " + shape_of(b) + ")");
  }
  Matrix diff = a->value - b->value;
  Matrix v(1, 1);
  v(0, 0) = diff.squaredNorm();
  Tensor out = make_tensor(std::move(v), want_grad(t, {&a, &b}));
  if (out->requires_grad) {
    t.record(out, {a, b}, [a, b, out, diff] {
      double d = 2.0 * out->grad(0, 0);
      if (a->requires_grad) accum(a, diff * d);
      if (b->requires_grad) accum(b, diff * (-d));
    });
  }
  return out;
}

Tensor pick_rows(Tape& t, const Tensor& a, const std::vector<int>& cols) {
  if (static_cast<Eigen::Index>(cols.size()) != a->value.rows()) {
    fail("pick_rows: need one column index per row (" + std::to_string(cols.size()) +
         " vs " + shape_of(a) + ")");
  }
  for (int c : cols) {
    if (c < 0 || c >= a->value.cols()) {
      fail("pick_rows: column " + std::to_string(c) + " out of range [0, " +
           std::to_string(a->value.cols()) + ")");
    }
  }
  Matrix v(a->value.rows(), 1);
  for (Eigen::Index r = 0; r < v.rows(); ++r) v(r, 0) = a->value(r, cols[r]);
  Tensor out = make_tensor(std::move(v), want_grad(t, {&a}));
  if (out->requires_grad) {
    t.record(out, {a}, [a, out, cols] {
      if (a->grad.size() == 0) a->grad = Matrix::Zero(a->value.rows(), a->value.cols());
      for (Eigen::Index r = 0; r < out->grad.rows(); ++r) {
        a->grad(r, cols[r]) += out->grad(r, 0);
      }
    });
  }
  return out;
}

Tensor concat_rows_many(Tape& t, const std::vector<Tensor>& parts) {
  if (parts.empty()) fail("concat_rows_many: empty part list");
  std::vector<Tensor> level = parts;
  while (level.size() > 1) {
    std::vector<Tensor> next;
    next.reserve((level.size() + 1) / 2);
    for (size_t i = 0; i + 1 < level.size(); i += 2) {
      next.push_back(concat_rows(t, level[i], level[i + 1]));
    }
    if (level.size() % 2 == 1) next.push_back(level.back());
    level = std::move(next);
  }
  return level[0];
}

Tensor concat_cols_many(Tape& t, const std::vector<Tensor>& parts) {
  if (parts.empty()) fail("concat_cols_many: empty part list");
  std::vector<Tensor> level = parts;
  while (level.size() > 1) {
    std::vector<Tensor> next;
    next.reserve((level.size() + 1) / 2);
    for (size_t i = 0; i + 1 < level.size(); i += 2) {
      next.push_back(concat_cols(t, level[i], level[i + 1]));
    }
    if (level.size() % 2 == 1) next.push_back(level.back());
    level = std::move(next);
  }
  return level[0];
}

}  // namespace cft
