// Copyright 2026 The gcbf-swarm Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <vector>

#include "gcbf/autodiff.hpp"

using namespace gcbf;
using namespace gcbf::ad;

namespace {

Mat row(std::initializer_list<double> v) {
  Mat m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) m(0, k++) = x;
  return m;
}

Mat random_mat(std::mt19937_64& rng, int r, int c, double s = 1.0) {
  std::normal_distribution<double> N(0, s);
  Mat m(r, c);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = N(rng);
  return m;
}

// Weighted sum of squares keeps every coordinate's gradient away from zero.
Var readout(Tape& t, const Var& y, const Mat& w) { return sum(mul(mul(y, y), t.constant(w))); }

}  // namespace

TEST_CASE("forward examples") {
  Tape t;
  CHECK(relu(t.constant(row({-1, 2}))).value() == row({0, 2}));
  const Mat s = softmax(t.constant(row({0, 0})), 1).value();
  CHECK(s(0, 0) == 0.5);
  CHECK(s(0, 1) == 0.5);
  Mat v(3, 1);
  v << 1, -2, 3;
  CHECK(matmul(t.constant(Mat::Identity(3, 3)), t.constant(v)).value() == v);
  // Max subtraction keeps large logits finite.
  const Mat big = softmax(t.constant(row({1000, 1000})), 1).value();
  CHECK(big(0, 0) == 0.5);
  CHECK_THROWS_AS(matmul(t.constant(Mat::Zero(2, 3)), t.constant(Mat::Zero(2, 3))), ContractError);
  CHECK_THROWS_AS(add(t.constant(Mat::Zero(2, 3)), t.constant(Mat::Zero(3, 2))), ContractError);
}

TEST_CASE("backward examples") {
  {
    Tape t;
    Var x = t.variable(row({1, 2, 3}));
    t.backward(sum(x));
    CHECK(x.grad() == row({1, 1, 1}));
  }
  {
    Tape t;
    Var x = t.variable(row({1, 2}));
    t.backward(sum(mul(x, x)));
    CHECK(x.grad() == row({2, 4}));
  }
  {
    Tape t;
    Var x = t.variable(row({0, 1}));
    t.backward(sum(hinge(x)));
    CHECK(x.grad() == row({0, 1}));
  }
  {
    // Reuse accumulates.
    Tape t;
    Var x = t.variable(row({3}));
    t.backward(add(x, add(x, x)));
    CHECK(x.grad()(0, 0) == 3.0);
  }
  {
    Tape t;
    CHECK_THROWS_AS(t.backward(Var()), ContractError);
    Var x = t.variable(row({1, 2}));
    CHECK_THROWS_AS(t.backward(x), ContractError);
    Var y = sum(x);
    t.backward(y);
    CHECK_THROWS_AS(t.backward(y), ContractError);
    t.reset();
    CHECK(t.size() == 0);
  }
  {
    // Parameters accumulate across tapes until zero_grad.
    Parameter p("w", row({2, -1}));
    for (int k = 0; k < 2; ++k) {
      Tape t;
      t.backward(sum(t.param(p)));
    }
    CHECK(p.grad == row({2, 2}));
    p.zero_grad();
    CHECK(p.grad.isZero(0));
  }
}

TEST_CASE("grad_check examples") {
  std::mt19937_64 rng(1);
  const Mat theta = random_mat(rng, 3, 2);
  const Mat A = random_mat(rng, 2, 2);
  const GradCheck q = grad_check(
      [&](Tape& t, const Var& x) { return sum(mul(matmul(x, t.constant(A)), x)); }, theta);
  CHECK(q.max_rel_error < 1e-7);

  const GradCheck c = grad_check([](Tape& t, const Var&) { return sum(t.constant(row({4}))); },
                                 theta);
  CHECK(c.analytic.isZero(0));
  CHECK(c.numeric.isZero(0));
  CHECK(c.max_rel_error == 0.0);

  // Two-layer MLP in its weights.
  const Mat x = random_mat(rng, 5, 3);
  const Mat W2 = random_mat(rng, 4, 1);
  const GradCheck m = grad_check(
      [&](Tape& t, const Var& W1) {
        Var h = relu(matmul(t.constant(x), W1));
        Var y = matmul(h, t.constant(W2));
        return sum(mul(y, y));
      },
      random_mat(rng, 3, 4));
  CHECK(m.max_rel_error < 1e-4);
}

TEST_CASE("composite gradients over random seeds") {
  for (int seed = 0; seed < 20; ++seed) {
    CAPTURE(seed);
    std::mt19937_64 rng(100 + seed);
    const int E = 7, n = 3;
    std::vector<int> seg = {0, 0, 1, 1, 1, 2, 0};
    std::vector<int> gather = {2, 0, 1, 1, 3};
    const Mat w_edge = random_mat(rng, E, 4);
    const Mat w_seg = random_mat(rng, n, 4);
    const Mat W = random_mat(rng, 4, 4);
    const Mat b = random_mat(rng, 1, 4);
    const Mat lo = Mat::Constant(1, 4, -0.8), hi = Mat::Constant(1, 4, 0.8);
    const Vec vlo = lo.row(0).transpose(), vhi = hi.row(0).transpose();

    auto attention = [&](Tape& t, const Var& x) {
      Var logits = slice_cols(x, 0, 1);
      Var a = segment_softmax(logits, seg, n);
      Var msg = mul_col(relu(affine(x, t.constant(W), t.constant(b))), a);
      return readout(t, segment_sum(msg, seg, n), w_seg);
    };
    CHECK(grad_check(attention, random_mat(rng, E, 4)).max_rel_error < 1e-4);

    auto shaping = [&](Tape& t, const Var& x) {
      Var g = gather_rows(x, gather);
      Var c = concat_cols({cos(slice_cols(g, 0, 2)), sin(slice_cols(g, 2, 2))});
      Var r = concat_rows({c, scale(add_scalar(g, 0.3), 0.5)});
      Var s = softmax(r, 0);
      return add(readout(t, s, Mat::Constant(r.rows(), 4, 1.7)), sum(row_norm(x)));
    };
    CHECK(grad_check(shaping, random_mat(rng, 4, 4)).max_rel_error < 1e-4);

    auto bounded = [&](Tape& t, const Var& x) {
      Var y = clamp_row_norm(x, 1.0);
      Var z = clamp(matmul(x, t.constant(W)), vlo, vhi);
      return add(add(readout(t, y, w_edge), readout(t, z, w_edge)),
                 add(norm2(x), mean(sum(add_row(x, t.constant(b)), 1))));
    };
    CHECK(grad_check(bounded, random_mat(rng, E, 4)).max_rel_error < 1e-4);
  }
}

TEST_CASE("backward is linear in the loss") {
  std::mt19937_64 rng(8);
  const Mat theta = random_mat(rng, 3, 3);
  const Mat W = random_mat(rng, 3, 3);
  auto f = [&](Tape& t, const Var& x) { return sum(relu(matmul(x, t.constant(W)))); };
  auto g = [&](Tape&, const Var& x) { return norm2(softmax(x, 1)); };
  auto grad_of = [&](const std::function<Var(Tape&, const Var&)>& fn) {
    Tape t;
    Var x = t.variable(theta);
    t.backward(fn(t, x));
    return x.grad();
  };
  const double a = 2.5, b = -0.75;
  const Mat combined =
      grad_of([&](Tape& t, const Var& x) { return add(scale(f(t, x), a), scale(g(t, x), b)); });
  const Mat expected = a * grad_of(f) + b * grad_of(g);
  CHECK((combined - expected).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("segment ops") {
  Tape t;
  Mat logits(4, 1);
  logits << 0.3, -1.0, 2.0, 0.0;
  std::vector<int> seg = {0, 1, 0, 1};
  const Mat a = segment_softmax(t.constant(logits), seg, 3).value();
  CHECK(std::abs(a(0, 0) + a(2, 0) - 1) < 1e-15);
  CHECK(std::abs(a(1, 0) + a(3, 0) - 1) < 1e-15);
  const Mat s = segment_sum(t.constant(Mat::Ones(4, 2)), seg, 3).value();
  CHECK(s(0, 0) == 2.0);
  CHECK(s.row(2).isZero(0));  // empty segment
}
