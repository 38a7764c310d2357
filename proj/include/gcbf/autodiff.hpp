// Copyright 2026 The gcbf-swarm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gcbf/common.hpp"

namespace gcbf::ad {

/// Trainable tensor. `grad` accumulates across every backward pass that
/// touches it until zero_grad() is called.
struct Parameter {
  std::string name;
  Mat value;
  mutable Mat grad;  // written by Tape::backward through param leaves

  Parameter() = default;
  Parameter(std::string n, Mat v) : name(std::move(n)), value(std::move(v)) { zero_grad(); }
  void zero_grad() const { grad = Mat::Zero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  const Mat& value() const;
  /// Gradient of the last backward pass; zeros if the node received none.
  Mat grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;
  bool requires_grad() const;
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Records operations in execution order; backward() replays them in reverse.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Mat& out_grad)>;

  Var constant(Mat value);
  /// Constant leaf that references `value` without copying; it must outlive the tape use.
  Var constant_ref(const Mat& value);
  /// Leaf that requires a gradient; read it back through Var::grad().
  Var variable(Mat value);
  /// Leaf bound to a parameter (by reference); backward adds into p.grad.
  Var param(const Parameter& p);
  /// param() when trainable, constant_ref() otherwise.
  Var bind(const Parameter& p, bool trainable) {
    return trainable ? param(p) : constant_ref(p.value);
  }

  /// Reverse sweep from a 1x1 loss. A tape can be swept once until reset().
  void backward(const Var& loss);
  void reset();
  std::size_t size() const { return nodes_.size(); }

  // Used by op implementations.
  Var record(Mat value, bool requires_grad, BackwardFn fn);
  const Mat& value(int id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
  }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of a node, allocated as zeros on first use.
  Mat& grad_ref(int id);
  const Mat* grad_ptr(int id) const;

 private:
  struct Node {
    Mat value;
    const Mat* external = nullptr;
    Mat grad;
    bool requires_grad = false;
    BackwardFn backward;
    const Parameter* sink = nullptr;
  };
  std::deque<Node> nodes_;  // stable references while recording
  bool swept_ = false;
};

// Elementwise and linear algebra.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
/// a (r x c) + row (1 x c) broadcast down the rows.
Var add_row(const Var& a, const Var& row);
/// Scales row k of x (r x c) by w(k) where w is r x 1.
Var mul_col(const Var& x, const Var& w);
Var matmul(const Var& a, const Var& b);
/// x W + b with b a 1 x out row.
Var affine(const Var& x, const Var& W, const Var& b);

Var relu(const Var& a);
/// max(a, 0); identical to relu, named for hinge terms.
inline Var hinge(const Var& a) { return relu(a); }
Var cos(const Var& a);
Var sin(const Var& a);
/// Columnwise clamp to [lo(c), hi(c)]; gradient passes only where unclamped.
Var clamp(const Var& a, const Vec& lo, const Vec& hi);
/// Rescales any row whose Euclidean norm exceeds c to norm c.
Var clamp_row_norm(const Var& a, double c);

/// axis 0: over each column; axis 1: over each row. Max-subtracted.
Var softmax(const Var& a, int axis);
/// Softmax of an E x 1 column within groups given by segment[e] in [0, n_segments).
Var segment_softmax(const Var& logits, std::span<const int> segment, int n_segments);
/// Row scatter-add: out.row(segment[e]) += x.row(e). Empty segments stay zero.
Var segment_sum(const Var& x, std::span<const int> segment, int n_segments);
Var gather_rows(const Var& x, std::span<const int> index);

Var sum(const Var& a);
/// axis 0: column sums (1 x c); axis 1: row sums (r x 1).
Var sum(const Var& a, int axis);
Var mean(const Var& a);
/// Euclidean norm of all entries (1 x 1); subgradient 0 at the origin.
Var norm2(const Var& a);
/// Per-row Euclidean norms (r x 1); subgradient 0 for zero rows.
Var row_norm(const Var& a);

Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(const Var& a, int begin, int count);
Var slice_rows(const Var& a, int begin, int count);

struct GradCheck {
  double max_rel_error = 0.0;
  Mat analytic;
  Mat numeric;
};

/// Compares the reverse-mode gradient of a scalar f at theta with central
/// differences of step h. Error per coordinate is |AD - FD| / (|FD| + 1e-8).
GradCheck grad_check(const std::function<Var(Tape&, const Var&)>& f, const Mat& theta,
                     double h = 1e-5);

}  // namespace gcbf::ad
