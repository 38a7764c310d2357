// Copyright 2026 The gcbf-swarm Authors
// SPDX-License-Identifier: Apache-2.0

#include "gcbf/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gcbf::ad {

namespace {

Tape& tape_of(const Var& a) {
  require(a.tape() != nullptr, "variable is not attached to a tape");
  return *a.tape();
}

Tape& tape_of(const Var& a, const Var& b) {
  require(a.tape() == b.tape() && a.tape() != nullptr, "variables live on different tapes");
  return *a.tape();
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
              std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
              std::to_string(b.cols()) + ")");
}

}  // namespace

// ---------------------------------------------------------------------------
// Var / Tape

const Mat& Var::value() const {
  require(tape_ != nullptr, "empty variable");
  return tape_->value(id_);
}

Mat Var::grad() const {
  require(tape_ != nullptr, "empty variable");
  if (const Mat* g = tape_->grad_ptr(id_)) return *g;
  return Mat::Zero(rows(), cols());
}

double Var::scalar() const {
  require(rows() == 1 && cols() == 1, "scalar() on a non-scalar variable");
  return value()(0, 0);
}

bool Var::requires_grad() const { return tape_ != nullptr && tape_->requires_grad(id_); }

Var Tape::constant(Mat value) { return record(std::move(value), false, nullptr); }

Var Tape::variable(Mat value) { return record(std::move(value), true, nullptr); }

Var Tape::constant_ref(const Mat& value) {
  Var v = record(Mat(), false, nullptr);
  nodes_[v.id()].external = &value;
  return v;
}

Var Tape::param(const Parameter& p) {
  Var v = record(Mat(), true, nullptr);
  nodes_[v.id()].external = &p.value;
  nodes_[v.id()].sink = &p;
  return v;
}

Var Tape::record(Mat value, bool requires_grad, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Mat& Tape::grad_ref(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) {
    const Mat& v = value(id);
    n.grad = Mat::Zero(v.rows(), v.cols());
  }
  return n.grad;
}

const Mat* Tape::grad_ptr(int id) const {
  const Node& n = nodes_[id];
  return n.grad.size() == 0 ? nullptr : &n.grad;
}

void Tape::backward(const Var& loss) {
  if (nodes_.empty()) throw ContractError("backward on an empty tape");
  require(loss.tape() == this, "loss belongs to another tape");
  require(loss.rows() == 1 && loss.cols() == 1, "backward needs a scalar loss");
  require(!swept_, "tape already swept; reset() before another backward pass");
  swept_ = true;
  if (!nodes_[loss.id()].requires_grad) return;
  grad_ref(loss.id()).setConstant(1.0);
  for (int k = loss.id(); k >= 0; --k) {
    Node& n = nodes_[k];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.sink) {
      if (n.sink->grad.size() == 0) n.sink->zero_grad();
      n.sink->grad += n.grad;
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  swept_ = false;
}

// ---------------------------------------------------------------------------
// Ops

Var add(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "add");
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() + b.value(), a.requires_grad() || b.requires_grad(),
                  [ia, ib](Tape& t, const Mat& g) {
                    if (t.requires_grad(ia)) t.grad_ref(ia) += g;
                    if (t.requires_grad(ib)) t.grad_ref(ib) += g;
                  });
}

Var sub(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "sub");
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() - b.value(), a.requires_grad() || b.requires_grad(),
                  [ia, ib](Tape& t, const Mat& g) {
                    if (t.requires_grad(ia)) t.grad_ref(ia) += g;
                    if (t.requires_grad(ib)) t.grad_ref(ib) -= g;
                  });
}

Var mul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "mul");
  const int ia = a.id(), ib = b.id();
  return t.record(a.value().cwiseProduct(b.value()), a.requires_grad() || b.requires_grad(),
                  [ia, ib](Tape& t, const Mat& g) {
                    if (t.requires_grad(ia)) t.grad_ref(ia) += g.cwiseProduct(t.value(ib));
                    if (t.requires_grad(ib)) t.grad_ref(ib) += g.cwiseProduct(t.value(ia));
                  });
}

Var scale(const Var& a, double s) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record(s * a.value(), a.requires_grad(),
                  [ia, s](Tape& t, const Mat& g) { t.grad_ref(ia) += s * g; });
}

Var add_scalar(const Var& a, double s) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record(a.value().array() + s, a.requires_grad(),
                  [ia](Tape& t, const Mat& g) { t.grad_ref(ia) += g; });
}

Var add_row(const Var& a, const Var& row) {
  Tape& t = tape_of(a, row);
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row: row shape mismatch");
  const int ia = a.id(), ir = row.id();
  Mat out = a.value();
  out.rowwise() += row.value().row(0);
  return t.record(std::move(out), a.requires_grad() || row.requires_grad(),
                  [ia, ir](Tape& t, const Mat& g) {
                    if (t.requires_grad(ia)) t.grad_ref(ia) += g;
                    if (t.requires_grad(ir)) t.grad_ref(ir) += g.colwise().sum();
                  });
}

Var mul_col(const Var& x, const Var& w) {
  Tape& t = tape_of(x, w);
  require(w.cols() == 1 && w.rows() == x.rows(), "mul_col: weight must be rows x 1");
  const int ix = x.id(), iw = w.id();
  Mat out = x.value().array().colwise() * w.value().col(0).array();
  return t.record(std::move(out), x.requires_grad() || w.requires_grad(),
                  [ix, iw](Tape& t, const Mat& g) {
                    if (t.requires_grad(ix))
                      t.grad_ref(ix).array() += g.array().colwise() * t.value(iw).col(0).array();
                    if (t.requires_grad(iw))
                      t.grad_ref(iw) += g.cwiseProduct(t.value(ix)).rowwise().sum();
                  });
}

Var matmul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require(a.cols() == b.rows(), "matmul: inner dimension mismatch (" + std::to_string(a.cols()) +
                                    " vs " + std::to_string(b.rows()) + ")");
  const int ia = a.id(), ib = b.id();
  Mat out = a.value() * b.value();
  return t.record(std::move(out), a.requires_grad() || b.requires_grad(),
                  [ia, ib](Tape& t, const Mat& g) {
                    if (t.requires_grad(ia)) t.grad_ref(ia).noalias() += g * t.value(ib).transpose();
                    if (t.requires_grad(ib)) t.grad_ref(ib).noalias() += t.value(ia).transpose() * g;
                  });
}

Var affine(const Var& x, const Var& W, const Var& b) {
  Tape& t = tape_of(x, W);
  require(b.tape() == &t, "affine: bias on another tape");
  require(x.cols() == W.rows(), "affine: input width does not match weight rows");
  require(b.rows() == 1 && b.cols() == W.cols(), "affine: bias must be 1 x out");
  const int ix = x.id(), iw = W.id(), ib = b.id();
  Mat out(x.rows(), W.cols());
  out.noalias() = x.value() * W.value();
  out.rowwise() += b.value().row(0);
  return t.record(std::move(out), x.requires_grad() || W.requires_grad() || b.requires_grad(),
                  [ix, iw, ib](Tape& t, const Mat& g) {
                    if (t.requires_grad(ix)) t.grad_ref(ix).noalias() += g * t.value(iw).transpose();
                    if (t.requires_grad(iw)) t.grad_ref(iw).noalias() += t.value(ix).transpose() * g;
                    if (t.requires_grad(ib)) t.grad_ref(ib) += g.colwise().sum();
                  });
}

Var relu(const Var& a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record(a.value().cwiseMax(0.0), a.requires_grad(), [ia](Tape& t, const Mat& g) {
    t.grad_ref(ia).array() += (t.value(ia).array() > 0.0).select(g.array(), 0.0);
  });
}

Var cos(const Var& a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record(a.value().array().cos(), a.requires_grad(), [ia](Tape& t, const Mat& g) {
    t.grad_ref(ia).array() -= g.array() * t.value(ia).array().sin();
  });
}

Var sin(const Var& a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  return t.record(a.value().array().sin(), a.requires_grad(), [ia](Tape& t, const Mat& g) {
    t.grad_ref(ia).array() += g.array() * t.value(ia).array().cos();
  });
}

Var clamp(const Var& a, const Vec& lo, const Vec& hi) {
  Tape& t = tape_of(a);
  require(lo.size() == a.cols() && hi.size() == a.cols(), "clamp: bound size mismatch");
  const int ia = a.id();
  Mat out = a.value();
  for (Eigen::Index c = 0; c < out.cols(); ++c)
    out.col(c) = out.col(c).cwiseMax(lo(c)).cwiseMin(hi(c));
  return t.record(std::move(out), a.requires_grad(), [ia, lo, hi](Tape& t, const Mat& g) {
    const Mat& x = t.value(ia);
    Mat& ga = t.grad_ref(ia);
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      for (Eigen::Index c = 0; c < x.cols(); ++c)
        if (x(r, c) >= lo(c) && x(r, c) <= hi(c)) ga(r, c) += g(r, c);
  });
}

Var clamp_row_norm(const Var& a, double c) {
  Tape& t = tape_of(a);
  require(c > 0, "clamp_row_norm: bound must be positive");
  const int ia = a.id();
  Mat out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double n = out.row(r).norm();
    if (n > c) out.row(r) *= c / n;
  }
  return t.record(std::move(out), a.requires_grad(), [ia, c](Tape& t, const Mat& g) {
    const Mat& x = t.value(ia);
    Mat& ga = t.grad_ref(ia);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double n = x.row(r).norm();
      if (n <= c) {
        ga.row(r) += g.row(r);
      } else {
        // d/dx (c x / |x|) = c/|x| (I - x x^T / |x|^2)
        const double proj = g.row(r).dot(x.row(r)) / (n * n);
        ga.row(r) += (c / n) * (g.row(r) - proj * x.row(r));
      }
    }
  });
}

Var softmax(const Var& a, int axis) {
  Tape& t = tape_of(a);
  require(axis == 0 || axis == 1, "softmax: axis must be 0 or 1");
  const int ia = a.id();
  Mat y = a.value();
  if (axis == 1) {
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      y.row(r).array() -= y.row(r).maxCoeff();
      y.row(r) = y.row(r).array().exp();
      y.row(r) /= y.row(r).sum();
    }
  } else {
    for (Eigen::Index c = 0; c < y.cols(); ++c) {
      y.col(c).array() -= y.col(c).maxCoeff();
      y.col(c) = y.col(c).array().exp();
      y.col(c) /= y.col(c).sum();
    }
  }
  const int io = static_cast<int>(t.size());  // id the output will get
  return t.record(std::move(y), a.requires_grad(), [ia, io, axis](Tape& t, const Mat& g) {
    const Mat& y = t.value(io);
    const Mat gy = g.cwiseProduct(y);
    Mat& ga = t.grad_ref(ia);
    if (axis == 1)
      ga += gy - (y.array().colwise() * gy.rowwise().sum().array()).matrix();
    else
      ga += gy - (y.array().rowwise() * gy.colwise().sum().array()).matrix();
  });
}

Var segment_softmax(const Var& logits, std::span<const int> segment, int n_segments) {
  Tape& t = tape_of(logits);
  require(logits.cols() == 1, "segment_softmax: logits must be a column");
  require(static_cast<Eigen::Index>(segment.size()) == logits.rows(),
          "segment_softmax: one segment id per row expected");
  const Mat& z = logits.value();
  const Eigen::Index E = z.rows();
  std::vector<double> seg_max(n_segments, -std::numeric_limits<double>::infinity());
  for (Eigen::Index e = 0; e < E; ++e) {
    require(segment[e] >= 0 && segment[e] < n_segments, "segment_softmax: id out of range");
    seg_max[segment[e]] = std::max(seg_max[segment[e]], z(e, 0));
  }
  Mat y(E, 1);
  std::vector<double> seg_sum(n_segments, 0.0);
  for (Eigen::Index e = 0; e < E; ++e) {
    y(e, 0) = std::exp(z(e, 0) - seg_max[segment[e]]);
    seg_sum[segment[e]] += y(e, 0);
  }
  for (Eigen::Index e = 0; e < E; ++e) y(e, 0) /= seg_sum[segment[e]];
  const int ia = logits.id();
  const int io = static_cast<int>(t.size());
  std::vector<int> seg(segment.begin(), segment.end());
  return t.record(std::move(y), logits.requires_grad(),
                  [ia, io, seg = std::move(seg), n_segments](Tape& t, const Mat& g) {
                    const Mat& y = t.value(io);
                    std::vector<double> dot(n_segments, 0.0);
                    for (std::size_t e = 0; e < seg.size(); ++e) dot[seg[e]] += g(e, 0) * y(e, 0);
                    Mat& ga = t.grad_ref(ia);
                    for (std::size_t e = 0; e < seg.size(); ++e)
                      ga(e, 0) += y(e, 0) * (g(e, 0) - dot[seg[e]]);
                  });
}

Var segment_sum(const Var& x, std::span<const int> segment, int n_segments) {
  Tape& t = tape_of(x);
  require(static_cast<Eigen::Index>(segment.size()) == x.rows(),
          "segment_sum: one segment id per row expected");
  Mat out = Mat::Zero(n_segments, x.cols());
  const Mat& v = x.value();
  for (Eigen::Index e = 0; e < v.rows(); ++e) {
    require(segment[e] >= 0 && segment[e] < n_segments, "segment_sum: id out of range");
    out.row(segment[e]) += v.row(e);
  }
  const int ix = x.id();
  std::vector<int> seg(segment.begin(), segment.end());
  return t.record(std::move(out), x.requires_grad(),
                  [ix, seg = std::move(seg)](Tape& t, const Mat& g) {
                    Mat& gx = t.grad_ref(ix);
                    for (std::size_t e = 0; e < seg.size(); ++e) gx.row(e) += g.row(seg[e]);
                  });
}

Var gather_rows(const Var& x, std::span<const int> index) {
  Tape& t = tape_of(x);
  Mat out(static_cast<Eigen::Index>(index.size()), x.cols());
  const Mat& v = x.value();
  for (std::size_t k = 0; k < index.size(); ++k) {
    require(index[k] >= 0 && index[k] < v.rows(), "gather_rows: index out of range");
    out.row(k) = v.row(index[k]);
  }
  const int ix = x.id();
  std::vector<int> idx(index.begin(), index.end());
  return t.record(std::move(out), x.requires_grad(),
                  [ix, idx = std::move(idx)](Tape& t, const Mat& g) {
                    Mat& gx = t.grad_ref(ix);
                    for (std::size_t k = 0; k < idx.size(); ++k) gx.row(idx[k]) += g.row(k);
                  });
}

Var sum(const Var& a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  return t.record(std::move(out), a.requires_grad(),
                  [ia](Tape& t, const Mat& g) { t.grad_ref(ia).array() += g(0, 0); });
}

Var sum(const Var& a, int axis) {
  Tape& t = tape_of(a);
  require(axis == 0 || axis == 1, "sum: axis must be 0 or 1");
  const int ia = a.id();
  Mat out = axis == 0 ? Mat(a.value().colwise().sum()) : Mat(a.value().rowwise().sum());
  return t.record(std::move(out), a.requires_grad(), [ia, axis](Tape& t, const Mat& g) {
    Mat& ga = t.grad_ref(ia);
    if (axis == 0)
      ga.rowwise() += g.row(0);
    else
      ga.colwise() += g.col(0);
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.rows() * a.cols());
  require(n > 0, "mean of an empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var norm2(const Var& a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  Mat out(1, 1);
  out(0, 0) = a.value().norm();
  const int io = static_cast<int>(t.size());
  return t.record(std::move(out), a.requires_grad(), [ia, io](Tape& t, const Mat& g) {
    const double n = t.value(io)(0, 0);
    if (n > 0) t.grad_ref(ia) += (g(0, 0) / n) * t.value(ia);
  });
}

Var row_norm(const Var& a) {
  Tape& t = tape_of(a);
  const int ia = a.id();
  Mat out = a.value().rowwise().norm();
  const int io = static_cast<int>(t.size());
  return t.record(std::move(out), a.requires_grad(), [ia, io](Tape& t, const Mat& g) {
    const Mat& n = t.value(io);
    const Mat& x = t.value(ia);
    Mat& ga = t.grad_ref(ia);
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      if (n(r, 0) > 0) ga.row(r) += (g(r, 0) / n(r, 0)) * x.row(r);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols: nothing to concatenate");
  Tape& t = tape_of(parts[0]);
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  bool needs_grad = false;
  for (const auto& p : parts) {
    require(p.tape() == &t, "concat_cols: variables live on different tapes");
    require(p.rows() == rows, "concat_cols: row count mismatch");
    cols += p.cols();
    needs_grad = needs_grad || p.requires_grad();
  }
  Mat out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> layout;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    layout.emplace_back(p.id(), at);
    at += p.cols();
  }
  return t.record(std::move(out), needs_grad, [layout](Tape& t, const Mat& g) {
    for (const auto& [id, offset] : layout)
      if (t.requires_grad(id)) t.grad_ref(id) += g.middleCols(offset, t.value(id).cols());
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows: nothing to concatenate");
  Tape& t = tape_of(parts[0]);
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  bool needs_grad = false;
  for (const auto& p : parts) {
    require(p.tape() == &t, "concat_rows: variables live on different tapes");
    require(p.cols() == cols, "concat_rows: column count mismatch");
    rows += p.rows();
    needs_grad = needs_grad || p.requires_grad();
  }
  Mat out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> layout;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    layout.emplace_back(p.id(), at);
    at += p.rows();
  }
  return t.record(std::move(out), needs_grad, [layout](Tape& t, const Mat& g) {
    for (const auto& [id, offset] : layout)
      if (t.requires_grad(id)) t.grad_ref(id) += g.middleRows(offset, t.value(id).rows());
  });
}

Var slice_cols(const Var& a, int begin, int count) {
  Tape& t = tape_of(a);
  require(begin >= 0 && count >= 0 && begin + count <= a.cols(), "slice_cols: out of range");
  const int ia = a.id();
  return t.record(a.value().middleCols(begin, count), a.requires_grad(),
                  [ia, begin, count](Tape& t, const Mat& g) {
                    t.grad_ref(ia).middleCols(begin, count) += g;
                  });
}

Var slice_rows(const Var& a, int begin, int count) {
  Tape& t = tape_of(a);
  require(begin >= 0 && count >= 0 && begin + count <= a.rows(), "slice_rows: out of range");
  const int ia = a.id();
  return t.record(a.value().middleRows(begin, count), a.requires_grad(),
                  [ia, begin, count](Tape& t, const Mat& g) {
                    t.grad_ref(ia).middleRows(begin, count) += g;
                  });
}

GradCheck grad_check(const std::function<Var(Tape&, const Var&)>& f, const Mat& theta, double h) {
  GradCheck out;
  {
    Tape tape;
    Var x = tape.variable(theta);
    Var y = f(tape, x);
    tape.backward(y);
    out.analytic = x.grad();
  }
  auto eval = [&](const Mat& at) {
    Tape tape;
    Var x = tape.constant(at);
    return f(tape, x).scalar();
  };
  out.numeric = Mat::Zero(theta.rows(), theta.cols());
  Mat probe = theta;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    const double orig = probe.data()[k];
    probe.data()[k] = orig + h;
    const double up = eval(probe);
    probe.data()[k] = orig - h;
    const double down = eval(probe);
    probe.data()[k] = orig;
    out.numeric.data()[k] = (up - down) / (2.0 * h);
  }
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    const double fd = out.numeric.data()[k];
    const double err = std::abs(out.analytic.data()[k] - fd) / (std::abs(fd) + 1e-8);
    out.max_rel_error = std::max(out.max_rel_error, err);
  }
  return out;
}

}  // namespace gcbf::ad
