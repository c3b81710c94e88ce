#include "cft/tensor.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

#include "cft/gradcheck.hpp"
#include "cft/rng.hpp"

namespace cft {
namespace {

Matrix random_matrix(int r, int c, uint64_t seed) {
  Rng g = make_stream(seed, "test.matrix");
  Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = g.normal();
  return m;
}

TEST(Matmul, IdentityPassesThrough) {
  Tape t;
  Tensor i3 = make_tensor(Matrix::Identity(3, 3));
  Tensor b = make_tensor(random_matrix(3, 5, 1));
  Tensor c = matmul(t, i3, b);
  EXPECT_TRUE(c->value.isApprox(b->value, 0.0));
}

TEST(Matmul, ScalarProduct) {
  Tape t;
  Tensor a = make_tensor(Matrix::Constant(1, 1, 2.0));
  Tensor b = make_tensor(Matrix::Constant(1, 1, 3.0));
  EXPECT_DOUBLE_EQ(matmul(t, a, b)->value(0, 0), 6.0);
}

// Independent triple-loop accumulation oracle.
TEST(Matmul, MatchesTripleLoop) {
  Matrix a = random_matrix(3, 4, 2), b = random_matrix(4, 2, 3);
  Matrix expected = Matrix::Zero(3, 2);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 4; ++k) expected(i, j) += a(i, k) * b(k, j);
  Tape t;
  Tensor c = matmul(t, make_tensor(a), make_tensor(b));
  EXPECT_LT((c->value - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Matmul, RejectsInnerMismatch) {
  Tape t;
  Tensor a = make_tensor(Matrix::Zero(3, 4));
  Tensor b = make_tensor(Matrix::Zero(5, 2));
  EXPECT_THROW(matmul(t, a, b), std::invalid_argument);
}

TEST(Primitives, SoftmaxOfConstantRowIsUniform) {
  Tape t;
  Tensor x = make_tensor(Matrix::Constant(1, 4, 3.7));
  Tensor y = softmax_rows(t, x);
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(y->value(0, j), 0.25, 1e-15);
}

TEST(Primitives, SoftmaxRowsSumToOne) {
  Tape t;
  Tensor y = softmax_rows(t, make_tensor(random_matrix(5, 7, 4)));
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(y->value.row(i).sum(), 1.0, 1e-12);
}

TEST(Primitives, SoftmaxStableUnderLargeInputs) {
  Tape t;
  Matrix x(1, 3);
  x << 1000.0, 1000.0, 500.0;
  Tensor y = softmax_rows(t, make_tensor(x));
  EXPECT_NEAR(y->value(0, 0), 0.5, 1e-12);
  EXPECT_NEAR(y->value(0, 1), 0.5, 1e-12);
  EXPECT_TRUE(y->value.allFinite());
}

TEST(Primitives, LogSoftmaxMatchesLogOfSoftmax) {
  Tape t;
  Tensor x = make_tensor(random_matrix(3, 6, 5));
  Tensor a = log_softmax_rows(t, x);
  Tensor b = softmax_rows(t, x);
  EXPECT_LT((a->value.array().exp().matrix() - b->value).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Primitives, LayerNormFixedPoint) {
  // A zero-mean unit-variance row should pass through (up to the epsilon).
  Matrix x(1, 4);
  x << -1.0, 1.0, -1.0, 1.0;
  Tape t;
  Tensor g = make_tensor(Matrix::Ones(1, 4));
  Tensor b = make_tensor(Matrix::Zero(1, 4));
  Tensor y = layer_norm_rows(t, make_tensor(x), g, b);
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(y->value(0, j), x(0, j), 1e-5);
}

TEST(Primitives, LayerNormNormalizesRows) {
  Tape t;
  Tensor g = make_tensor(Matrix::Ones(1, 8));
  Tensor b = make_tensor(Matrix::Zero(1, 8));
  Tensor y = layer_norm_rows(t, make_tensor(random_matrix(4, 8, 6)), g, b);
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(y->value.row(i).mean(), 0.0, 1e-12);
    EXPECT_NEAR(y->value.row(i).array().square().mean(), 1.0, 1e-3);
  }
}

TEST(Primitives, GeluKnownValues) {
  Tape t;
  Matrix x(1, 3);
  x << 0.0, 1.0, -1.0;
  Tensor y = gelu(t, make_tensor(x));
  EXPECT_DOUBLE_EQ(y->value(0, 0), 0.0);
  // 0.5 * (1 + erf(1/sqrt(2))) = Phi(1)
  EXPECT_NEAR(y->value(0, 1), 0.8413447460685429, 1e-12);
  EXPECT_NEAR(y->value(0, 2), -0.15865525393145707, 1e-12);
}

TEST(Primitives, GatherRowsAndBounds) {
  Tape t;
  Matrix table = random_matrix(5, 3, 7);
  Tensor tt = make_tensor(table);
  Tensor out = gather_rows(t, tt, {4, 0, 4});
  EXPECT_TRUE(out->value.row(0).isApprox(table.row(4), 0.0));
  EXPECT_TRUE(out->value.row(1).isApprox(table.row(0), 0.0));
  EXPECT_THROW(gather_rows(t, tt, {5}), std::invalid_argument);
  EXPECT_THROW(gather_rows(t, tt, {-1}), std::invalid_argument);
}

TEST(Primitives, ConcatAndSliceRoundTrip) {
  Tape t;
  Matrix a = random_matrix(2, 3, 8), b = random_matrix(4, 3, 9);
  Tensor cat = concat_rows(t, make_tensor(a), make_tensor(b));
  EXPECT_EQ(cat->value.rows(), 6);
  Tensor back = slice_rows(t, cat, 2, 4);
  EXPECT_TRUE(back->value.isApprox(b, 0.0));

  Matrix c = random_matrix(2, 5, 10);
  Tensor catc = concat_cols(t, make_tensor(a), make_tensor(c));
  EXPECT_EQ(catc->value.cols(), 8);
  Tensor backc = slice_cols(t, catc, 3, 5);
  EXPECT_TRUE(backc->value.isApprox(c, 0.0));

  EXPECT_THROW(slice_rows(t, cat, 5, 2), std::invalid_argument);
  EXPECT_THROW(slice_cols(t, cat, 0, 9), std::invalid_argument);
  EXPECT_THROW(concat_rows(t, make_tensor(a), make_tensor(c)), std::invalid_argument);
  EXPECT_THROW(concat_cols(t, make_tensor(a), make_tensor(b)), std::invalid_argument);
}

TEST(Primitives, BroadcastingLimitedToBiasRow) {
  Tape t;
  Tensor a = make_tensor(random_matrix(4, 3, 11));
  Tensor bias = make_tensor(random_matrix(1, 3, 12));
  Tensor y = add(t, a, bias);
  EXPECT_TRUE(y->value.row(2).isApprox(a->value.row(2) + bias->value.row(0), 1e-15));
  // Any other shape mixing is rejected.
  EXPECT_THROW(add(t, a, make_tensor(Matrix::Zero(4, 1))), std::invalid_argument);
  EXPECT_THROW(add(t, a, make_tensor(Matrix::Zero(2, 3))), std::invalid_argument);
  EXPECT_THROW(mul(t, a, make_tensor(Matrix::Zero(1, 3))), std::invalid_argument);
  EXPECT_THROW(sub(t, a, make_tensor(Matrix::Zero(1, 3))), std::invalid_argument);
}

TEST(Primitives, PickRowsGathersAndChecks) {
  Tape t;
  Matrix a = random_matrix(3, 4, 13);
  Tensor out = pick_rows(t, make_tensor(a), {2, 0, 3});
  EXPECT_DOUBLE_EQ(out->value(0, 0), a(0, 2));
  EXPECT_DOUBLE_EQ(out->value(1, 0), a(1, 0));
  EXPECT_DOUBLE_EQ(out->value(2, 0), a(2, 3));
  EXPECT_THROW(pick_rows(t, make_tensor(a), {0, 1}), std::invalid_argument);
  EXPECT_THROW(pick_rows(t, make_tensor(a), {0, 1, 4}), std::invalid_argument);
}

TEST(Backward, SumGivesOnes) {
  Tape t;
  Tensor x = make_tensor(random_matrix(3, 4, 14), /*requires_grad=*/true);
  // sum(x) == mean(x) * N
  Tensor loss = scale(t, mean_all(t, x), 12.0);
  t.backward(loss);
  EXPECT_LT((x->grad - Matrix::Ones(3, 4)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Backward, QuadraticFormGivesTwoX) {
  Tape t;
  Matrix xv = random_matrix(1, 5, 15);
  Tensor x = make_tensor(xv, true);
  Tensor loss = squared_error(t, x, make_tensor(Matrix::Zero(1, 5)));
  t.backward(loss);
  EXPECT_LT((x->grad - 2.0 * xv).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Backward, RejectsNonScalarLoss) {
  Tape t;
  Tensor x = make_tensor(random_matrix(2, 2, 16), true);
  Tensor y = scale(t, x, 2.0);
  EXPECT_THROW(t.backward(y), std::invalid_argument);
}

TEST(Backward, UnreachableLeafGetsZero) {
  Tape t;
  Tensor x = make_tensor(random_matrix(2, 2, 17), true);
  Tensor orphan = make_tensor(random_matrix(3, 3, 18), true);
  Tensor used = scale(t, orphan, 1.0);  // participates in the tape, off the loss path
  (void)used;
  Tensor loss = mean_all(t, x);
  t.backward(loss);
  ASSERT_TRUE(has_grad(orphan));
  EXPECT_EQ(orphan->grad.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Backward, LinearInLoss) {
  Matrix xv = random_matrix(3, 3, 19);
  auto grad_of = [&](double a, double b) -> Matrix {
    Tensor x = make_tensor(xv, true);
    Tape t;
    Tensor l1 = mean_all(t, gelu(t, x));
    Tensor l2 = squared_error(t, softmax_rows(t, x), make_tensor(Matrix::Zero(3, 3)));
    Tensor loss = add(t, scale(t, l1, a), scale(t, l2, b));
    t.backward(loss);
    return x->grad;
  };
  Matrix g1 = grad_of(1.0, 0.0);
  Matrix g2 = grad_of(0.0, 1.0);
  Matrix g = grad_of(2.5, -1.25);
  EXPECT_LT((g - (2.5 * g1 - 1.25 * g2)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Backward, GradientsAccumulateAcrossCalls) {
  Tensor x = make_tensor(random_matrix(2, 2, 20), true);
  Tape t;
  Tensor loss = mean_all(t, x);
  t.backward(loss);
  Matrix once = x->grad;
  t.backward(loss);
  EXPECT_LT((x->grad - 2.0 * once).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Forward, BitwiseDeterministic) {
  Matrix xv = random_matrix(4, 4, 21);
  auto run = [&]() -> Matrix {
    Tape t;
    Tensor g = make_tensor(Matrix::Ones(1, 4));
    Tensor b = make_tensor(Matrix::Zero(1, 4));
    return softmax_rows(t, gelu(t, layer_norm_rows(t, make_tensor(xv), g, b)))->value;
  };
  Matrix a = run(), b = run();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_EQ(a(i, j), b(i, j));
}

// --- finite-difference checks, one per primitive backward rule ---

void expect_fd_pass(const std::function<Tensor(Tape&)>& loss_fn,
                    const std::vector<std::pair<std::string, Tensor>>& params) {
  GradCheckReport rep = finite_diff_check(loss_fn, params);
  EXPECT_TRUE(rep.pass) << rep.note << " max_rel_err=" << rep.max_rel_err;
}

TEST(FiniteDiff, QuadraticFormExample) {
  Matrix pv(1, 2);
  pv << 1.0, 2.0;
  Tensor p = make_tensor(pv, true);
  GradCheckReport rep = finite_diff_check(
      [&](Tape& t) { return squared_error(t, p, make_tensor(Matrix::Zero(1, 2))); },
      {{"p", p}}, 1e-5, 1e-6);
  EXPECT_TRUE(rep.pass);
  EXPECT_LT(rep.max_rel_err, 1e-6);
}

TEST(FiniteDiff, ConstantFunctionPasses) {
  Tensor p = make_tensor(random_matrix(2, 2, 22), true);
  GradCheckReport rep = finite_diff_check(
      [&](Tape& t) { return make_tensor(Matrix::Constant(1, 1, 3.0)); }, {{"p", p}});
  EXPECT_TRUE(rep.pass);
  EXPECT_EQ(rep.max_rel_err, 0.0);
}

TEST(FiniteDiff, RejectsBadEpsilon) {
  Tensor p = make_tensor(Matrix::Zero(1, 1), true);
  EXPECT_THROW(
      finite_diff_check([&](Tape& t) { return mean_all(t, p); }, {{"p", p}}, 1e-2),
      std::invalid_argument);
}

TEST(FiniteDiff, EveryPrimitive) {
  Tensor a = make_tensor(random_matrix(3, 4, 23), true);
  Tensor b = make_tensor(random_matrix(3, 4, 24), true);
  Tensor w = make_tensor(random_matrix(4, 2, 25), true);
  Tensor bias = make_tensor(random_matrix(1, 4, 26), true);
  Tensor gain = make_tensor(random_matrix(1, 4, 27), true);
  Tensor table = make_tensor(random_matrix(5, 3, 28), true);
  Tensor tgt = make_tensor(Matrix::Zero(3, 2));

  expect_fd_pass([&](Tape& t) { return squared_error(t, matmul(t, a, w), tgt); },
                 {{"a", a}, {"w", w}});
  expect_fd_pass([&](Tape& t) { return mean_all(t, add(t, a, b)); }, {{"a", a}, {"b", b}});
  expect_fd_pass([&](Tape& t) { return mean_all(t, gelu(t, add(t, a, bias))); },
                 {{"a", a}, {"bias", bias}});
  expect_fd_pass([&](Tape& t) { return squared_error(t, sub(t, a, b), mul(t, a, b)); },
                 {{"a", a}, {"b", b}});
  expect_fd_pass([&](Tape& t) { return mean_all(t, scale(t, a, -2.5)); }, {{"a", a}});
  expect_fd_pass(
      [&](Tape& t) { return squared_error(t, transpose(t, a), make_tensor(Matrix::Ones(4, 3))); },
      {{"a", a}});
  expect_fd_pass(
      [&](Tape& t) {
        return squared_error(t, softmax_rows(t, a), make_tensor(Matrix::Ones(3, 4)));
      },
      {{"a", a}});
  expect_fd_pass([&](Tape& t) { return mean_all(t, log_softmax_rows(t, a)); }, {{"a", a}});
  expect_fd_pass(
      [&](Tape& t) {
        return squared_error(t, layer_norm_rows(t, a, gain, bias),
                             make_tensor(Matrix::Ones(3, 4)));
      },
      {{"a", a}, {"gain", gain}, {"bias", bias}});
  expect_fd_pass([&](Tape& t) { return mean_all(t, gelu(t, a)); }, {{"a", a}});
  // duplicate ids exercise scatter-add accumulation
  expect_fd_pass(
      [&](Tape& t) { return mean_all(t, gather_rows(t, table, {4, 1, 4, 0})); },
      {{"table", table}});
  expect_fd_pass(
      [&](Tape& t) {
        return mean_all(t, gelu(t, concat_rows(t, a, b)));
      },
      {{"a", a}, {"b", b}});
  expect_fd_pass(
      [&](Tape& t) {
        return mean_all(t, gelu(t, concat_cols(t, a, b)));
      },
      {{"a", a}, {"b", b}});
  expect_fd_pass([&](Tape& t) { return mean_all(t, slice_rows(t, a, 1, 2)); }, {{"a", a}});
  expect_fd_pass([&](Tape& t) { return mean_all(t, slice_cols(t, a, 1, 3)); }, {{"a", a}});
  expect_fd_pass([&](Tape& t) { return mean_all(t, a); }, {{"a", a}});
  expect_fd_pass([&](Tape& t) { return squared_error(t, a, b); }, {{"a", a}, {"b", b}});
  expect_fd_pass(
      [&](Tape& t) { return mean_all(t, pick_rows(t, a, {3, 0, 2})); }, {{"a", a}});
}

// Random multi-layer composition, the spec's end-to-end sanity case.
TEST(FiniteDiff, ThreeLayerComposition) {
  Tensor x = make_tensor(random_matrix(2, 6, 30));
  Tensor w1 = make_tensor(random_matrix(6, 6, 31), true);
  Tensor b1 = make_tensor(random_matrix(1, 6, 32), true);
  Tensor w2 = make_tensor(random_matrix(6, 6, 33), true);
  Tensor g2 = make_tensor(random_matrix(1, 6, 34), true);
  Tensor c2 = make_tensor(random_matrix(1, 6, 35), true);
  Tensor w3 = make_tensor(random_matrix(6, 1, 36), true);
  auto loss_fn = [&](Tape& t) {
    Tensor h1 = gelu(t, add(t, matmul(t, x, w1), b1));
    Tensor h2 = layer_norm_rows(t, matmul(t, h1, w2), g2, c2);
    Tensor h3 = softmax_rows(t, h2);
    return squared_error(t, matmul(t, h3, w3), make_tensor(Matrix::Ones(2, 1)));
  };
  expect_fd_pass(loss_fn,
                 {{"w1", w1}, {"b1", b1}, {"w2", w2}, {"g2", g2}, {"c2", c2}, {"w3", w3}});
}

TEST(Tape, NoGradModeRecordsNothing) {
  Tape t(/*grad_enabled=*/false);
  Tensor x = make_tensor(random_matrix(2, 2, 37), true);
  Tensor y = gelu(t, x);
  EXPECT_FALSE(y->requires_grad);
  EXPECT_EQ(t.size(), 0u);
}

TEST(Tape, ConcatManyMatchesSingleConcats) {
  Tape t;
  std::vector<Tensor> parts;
  Matrix full(7, 2);
  int row = 0;
  for (int i = 0; i < 3; ++i) {
    Matrix m = random_matrix(i + 1, 2, 40 + i);
    full.middleRows(row, i + 1) = m;
    row += i + 1;
    parts.push_back(make_tensor(m));
  }
  Tensor cat = concat_rows_many(t, parts);
  ASSERT_EQ(cat->value.rows(), 6);
  EXPECT_TRUE(cat->value.isApprox(full.topRows(6), 0.0));
}

}  // namespace
}  // namespace cft
