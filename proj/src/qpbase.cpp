// Copyright 2026 The gcbf-swarm Authors
// SPDX-License-Identifier: Apache-2.0

#include "gcbf/qpbase.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "gcbf/spatial.hpp"

namespace gcbf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Every inequality as one row: C x >= d. Rows are the A rows, then finite
// lower bounds, then finite upper bounds (negated).
struct Rows {
  Mat C;
  Vec d;
  std::vector<int> kind;   // 0: A row, 1: lower bound, 2: upper bound
  std::vector<int> index;  // row of A or variable index
};

Rows stack_rows(const QpProblem& p) {
  const int n = p.n();
  const int m = static_cast<int>(p.A.rows());
  Rows rows;
  std::vector<std::pair<int, int>> entries;
  for (int k = 0; k < m; ++k) entries.emplace_back(0, k);
  for (int k = 0; k < n; ++k)
    if (std::isfinite(p.lo(k))) entries.emplace_back(1, k);
  for (int k = 0; k < n; ++k)
    if (std::isfinite(p.hi(k))) entries.emplace_back(2, k);
  rows.C = Mat::Zero(static_cast<Eigen::Index>(entries.size()), n);
  rows.d.resize(static_cast<Eigen::Index>(entries.size()));
  for (std::size_t r = 0; r < entries.size(); ++r) {
    const auto [kind, k] = entries[r];
    rows.kind.push_back(kind);
    rows.index.push_back(k);
    if (kind == 0) {
      rows.C.row(r) = p.A.row(k);
      rows.d(r) = p.b(k);
    } else if (kind == 1) {
      rows.C(r, k) = 1.0;
      rows.d(r) = p.lo(k);
    } else {
      rows.C(r, k) = -1.0;
      rows.d(r) = -p.hi(k);
    }
  }
  return rows;
}

void scatter_multipliers(const QpProblem& p, const Rows& rows, const Vec& lambda_rows,
                         QpSolution& s) {
  s.lambda = Vec::Zero(p.A.rows());
  s.lambda_lo = Vec::Zero(p.n());
  s.lambda_hi = Vec::Zero(p.n());
  for (Eigen::Index r = 0; r < lambda_rows.size(); ++r) {
    const int k = rows.index[r];
    switch (rows.kind[r]) {
      case 0: s.lambda(k) = lambda_rows(r); break;
      case 1: s.lambda_lo(k) = lambda_rows(r); break;
      default: s.lambda_hi(k) = lambda_rows(r); break;
    }
  }
}

void check_problem(const QpProblem& p) {
  const int n = p.n();
  require(p.weight.size() == n && p.lo.size() == n && p.hi.size() == n,
          "QP vectors must share the variable count");
  require(p.A.cols() == n || p.A.rows() == 0, "constraint matrix width mismatch");
  require(p.A.rows() == p.b.size(), "constraint rows and right-hand side differ in length");
  require((p.weight.array() > 0).all(), "QP cost must be positive definite");
  require((p.lo.array() <= p.hi.array()).all(), "variable bounds must satisfy lo <= hi");
}

double problem_scale(const QpProblem& p) {
  double s = 1.0;
  s = std::max(s, p.target.lpNorm<Eigen::Infinity>());
  if (p.b.size() > 0) s = std::max(s, p.b.lpNorm<Eigen::Infinity>());
  return s;
}

}  // namespace

double pair_h(const Vec& x1, const Vec& x2, double r) {
  require(x1.size() == 4 && x2.size() == 4, "pair barrier expects double-integrator states");
  const Eigen::Vector2d dp = x1.head<2>() - x2.head<2>();
  const Eigen::Vector2d dv = x1.tail<2>() - x2.tail<2>();
  return 2.0 * dp.dot(dv) + dp.squaredNorm() - 4.0 * r * r;
}

PairHdot pair_hdot_coeffs(const Vec& x1, const Vec& x2) {
  require(x1.size() == 4 && x2.size() == 4, "pair barrier expects double-integrator states");
  const Eigen::Vector2d dp = x1.head<2>() - x2.head<2>();
  const Eigen::Vector2d dv = x1.tail<2>() - x2.tail<2>();
  PairHdot out;
  out.constant = 2.0 * dv.squaredNorm() + 2.0 * dp.dot(dv);
  out.a1_coeff = 2.0 * dp;
  out.a2_coeff = -2.0 * dp;
  return out;
}

QpProblem make_qp(const Vec& target, const Vec& lo, const Vec& hi) {
  QpProblem p;
  p.weight = Vec::Ones(target.size());
  p.target = target;
  p.A.resize(0, target.size());
  p.b.resize(0);
  p.lo = lo;
  p.hi = hi;
  return p;
}

double KktReport::max() const {
  return std::max({stationarity, primal, dual, complementarity});
}

KktReport kkt_report(const QpProblem& p, const QpSolution& s) {
  KktReport k;
  const Vec& u = s.u;
  Vec grad = p.weight.cwiseProduct(u - p.target) - s.lambda_lo + s.lambda_hi;
  if (p.A.rows() > 0) grad -= p.A.transpose() * s.lambda;
  k.stationarity = grad.lpNorm<Eigen::Infinity>();
  auto slack_check = [&](double slack, double mult) {
    k.primal = std::max(k.primal, -slack);
    k.dual = std::max(k.dual, -mult);
    k.complementarity = std::max(k.complementarity, std::abs(mult * slack));
  };
  if (p.A.rows() > 0) {
    const Vec slack = p.A * u - p.b;
    for (Eigen::Index r = 0; r < slack.size(); ++r) slack_check(slack(r), s.lambda(r));
  }
  for (int i = 0; i < p.n(); ++i) {
    if (std::isfinite(p.lo(i))) slack_check(u(i) - p.lo(i), s.lambda_lo(i));
    if (std::isfinite(p.hi(i))) slack_check(p.hi(i) - u(i), s.lambda_hi(i));
  }
  return k;
}

QpSolution solve_qp_active_set(const QpProblem& p, double tol, int max_iter) {
  check_problem(p);
  const Rows rows = stack_rows(p);
  const int n = p.n();
  const Eigen::Index m = rows.C.rows();
  const Vec Hdiag = p.weight.cwiseInverse();
  const double feas_tol = tol * problem_scale(p);
  constexpr double kEps = 1e-14;

  QpSolution sol;
  sol.method = QpMethod::ActiveSet;
  Vec x = p.target;  // unconstrained minimizer
  std::vector<int> active;
  std::vector<double> mult;
  std::vector<char> is_active(static_cast<std::size_t>(m), 0);
  int iter = 0;
  bool stalled = false;
  bool infeasible = false;

  while (true) {
    // Most violated inactive constraint.
    int p_row = -1;
    double worst = -feas_tol;
    for (Eigen::Index r = 0; r < m; ++r) {
      if (is_active[r]) continue;
      const double s = rows.C.row(r).dot(x) - rows.d(r);
      if (s < worst) {
        worst = s;
        p_row = static_cast<int>(r);
      }
    }
    if (p_row < 0) break;

    const Vec np = rows.C.row(p_row).transpose();
    double u_p = 0.0;
    while (true) {
      if (++iter > max_iter) {
        stalled = true;
        break;
      }
      const int q = static_cast<int>(active.size());
      Vec z = Hdiag.cwiseProduct(np);
      Vec r_dir = Vec::Zero(q);
      if (q > 0) {
        Mat N(n, q);
        for (int l = 0; l < q; ++l) N.col(l) = rows.C.row(active[l]).transpose();
        const Mat HN = Hdiag.asDiagonal() * N;
        const Mat M = N.transpose() * HN;
        r_dir = M.ldlt().solve(HN.transpose() * np);
        z -= HN * r_dir;
      }
      double t1 = kInf;
      int drop = -1;
      for (int l = 0; l < q; ++l) {
        if (r_dir(l) > kEps) {
          const double ratio = mult[l] / r_dir(l);
          if (ratio < t1) {
            t1 = ratio;
            drop = l;
          }
        }
      }
      const double zn = z.dot(np);
      const double s_p = np.dot(x) - rows.d(p_row);
      // z vanishes when n_p is a combination of the active normals.
      const double t2 = zn > 1e-10 * np.dot(Hdiag.cwiseProduct(np)) ? -s_p / zn : kInf;
      if (!std::isfinite(t1) && !std::isfinite(t2)) {
        infeasible = true;
        break;
      }
      const double t = std::min(t1, t2);
      if (std::isfinite(t2)) x += t * z;
      for (int l = 0; l < q; ++l) mult[l] -= t * r_dir(l);
      u_p += t;
      if (t2 <= t1) {
        active.push_back(p_row);
        mult.push_back(u_p);
        is_active[p_row] = 1;
        break;
      }
      is_active[active[drop]] = 0;
      active.erase(active.begin() + drop);
      mult.erase(mult.begin() + drop);
    }
    if (stalled || infeasible) break;
  }

  sol.u = x;
  Vec lambda_rows = Vec::Zero(m);
  for (std::size_t l = 0; l < active.size(); ++l) lambda_rows(active[l]) = std::max(0.0, mult[l]);
  scatter_multipliers(p, rows, lambda_rows, sol);
  sol.iterations = iter;
  sol.feasible = !infeasible && !stalled;
  sol.kkt_residual = kkt_report(p, sol).max();
  if (stalled) sol.kkt_residual = kInf;
  return sol;
}

QpSolution solve_qp_admm(const QpProblem& p, double tol, int max_iter) {
  check_problem(p);
  const int n = p.n();
  const Eigen::Index m_a = p.A.rows();
  const Eigen::Index m = m_a + n;
  Mat C(m, n);
  if (m_a > 0) C.topRows(m_a) = p.A;
  C.bottomRows(n) = Mat::Identity(n, n);
  Vec l(m), u(m);
  if (m_a > 0) {
    l.head(m_a) = p.b;
    u.head(m_a).setConstant(kInf);
  }
  l.tail(n) = p.lo;
  u.tail(n) = p.hi;

  constexpr double rho = 0.1, sigma = 1e-6, relax = 1.6;
  const Vec q = -p.weight.cwiseProduct(p.target);
  Mat K = C.transpose() * C * rho;
  K.diagonal() += p.weight + Vec::Constant(n, sigma);
  const Eigen::LDLT<Mat> ldlt(K);

  Vec x = p.target.cwiseMax(p.lo).cwiseMin(p.hi);
  Vec z = (C * x).cwiseMax(l).cwiseMin(u);
  Vec y = Vec::Zero(m);
  QpSolution sol;
  sol.method = QpMethod::Admm;
  const double scale = problem_scale(p);
  int it = 0;
  double r_prim = kInf, r_dual = kInf;
  for (; it < max_iter; ++it) {
    const Vec rhs = sigma * x - q + C.transpose() * (rho * z - y);
    const Vec xt = ldlt.solve(rhs);
    const Vec zt = C * xt;
    x = relax * xt + (1.0 - relax) * x;
    const Vec zr = relax * zt + (1.0 - relax) * z;
    const Vec z_new = (zr + y / rho).cwiseMax(l).cwiseMin(u);
    y += rho * (zr - z_new);
    z = z_new;
    r_prim = (C * x - z).lpNorm<Eigen::Infinity>();
    r_dual = (p.weight.cwiseProduct(x) + q + C.transpose() * y).lpNorm<Eigen::Infinity>();
    if (r_prim < tol * scale && r_dual < tol * scale) break;
  }
  sol.iterations = it;
  sol.u = x;
  sol.lambda = m_a > 0 ? Vec(-y.head(m_a)) : Vec(0);
  sol.lambda_lo = (-y.tail(n)).cwiseMax(0.0);
  sol.lambda_hi = y.tail(n).cwiseMax(0.0);
  sol.lambda = sol.lambda.cwiseMax(0.0);
  sol.feasible = r_prim < std::sqrt(tol) * scale;
  sol.kkt_residual = kkt_report(p, sol).max();
  return sol;
}

QpSolution solve_qp(const QpProblem& p, double tol, int max_iter) {
  QpSolution as = solve_qp_active_set(p, tol, max_iter);
  const double scale = problem_scale(p);
  if (as.feasible && as.kkt_residual <= tol * scale) return as;
  const bool stalled = !std::isfinite(as.kkt_residual);
  if (!as.feasible && !stalled) return as;
  QpSolution admm = solve_qp_admm(p, tol, max_iter);
  if (!admm.feasible && as.feasible) return as;
  return admm.kkt_residual < as.kkt_residual ? admm : as;
}

FilterResult centralized_filter(const std::vector<Vec>& states, const std::vector<Vec>& nominals,
                                const FilterConfig& cfg) {
  require(states.size() == nominals.size(), "one nominal control per agent expected");
  const int N = static_cast<int>(states.size());
  std::vector<Vec> positions(N);
  for (int i = 0; i < N; ++i) positions[i] = states[i].head(2);
  const auto pairs = neighbor_pairs(positions, cfg.sensing_radius);

  const auto t0 = std::chrono::steady_clock::now();
  FilterResult out;
  Vec target(2 * N);
  for (int i = 0; i < N; ++i) target.segment(2 * i, 2) = nominals[i];
  QpProblem qp = make_qp(target, Vec::Constant(2 * N, -cfg.accel_bound),
                         Vec::Constant(2 * N, cfg.accel_bound));
  std::vector<Eigen::RowVectorXd> rows;
  std::vector<double> rhs;
  for (const auto& [i, j] : pairs) {
    const PairHdot c = pair_hdot_coeffs(states[i], states[j]);
    if (c.a1_coeff.isZero(0.0)) {
      ++out.degenerate_pairs;
      continue;
    }
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(2 * N);
    row.segment(2 * i, 2) = c.a1_coeff.transpose();
    row.segment(2 * j, 2) = c.a2_coeff.transpose();
    rows.push_back(std::move(row));
    rhs.push_back(-cfg.alpha * pair_h(states[i], states[j], cfg.r) - c.constant);
  }
  qp.A.resize(static_cast<Eigen::Index>(rows.size()), 2 * N);
  qp.b.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    qp.A.row(k) = rows[k];
    qp.b(k) = rhs[k];
  }
  out.n_constraints = static_cast<int>(rows.size());
  out.controls.resize(N);
  out.fallback.assign(N, false);
  if (rows.empty()) {
    for (int i = 0; i < N; ++i) out.controls[i] = nominals[i].cwiseMax(-cfg.accel_bound).cwiseMin(cfg.accel_bound);
  } else {
    const QpSolution s = solve_qp(qp);
    for (int i = 0; i < N; ++i) {
      out.controls[i] = s.feasible ? Vec(s.u.segment(2 * i, 2))
                                   : Vec(nominals[i].cwiseMax(-cfg.accel_bound).cwiseMin(cfg.accel_bound));
      out.fallback[i] = !s.feasible;
    }
  }
  out.solve_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

FilterResult decentralized_filter(const std::vector<Vec>& states,
                                  const std::vector<Vec>& nominals, const FilterConfig& cfg) {
  require(states.size() == nominals.size(), "one nominal control per agent expected");
  const int N = static_cast<int>(states.size());
  std::vector<Vec> positions(N);
  for (int i = 0; i < N; ++i) positions[i] = states[i].head(2);
  const auto neighbors = neighbor_lists(positions, cfg.sensing_radius);

  const auto t0 = std::chrono::steady_clock::now();
  FilterResult out;
  out.controls.resize(N);
  out.fallback.assign(N, false);
  const Vec lo = Vec::Constant(2, -cfg.accel_bound);
  const Vec hi = Vec::Constant(2, cfg.accel_bound);
  for (int i = 0; i < N; ++i) {
    QpProblem qp = make_qp(nominals[i], lo, hi);
    std::vector<Eigen::RowVector2d> rows;
    std::vector<double> rhs;
    for (int j : neighbors[i]) {
      const PairHdot c = pair_hdot_coeffs(states[i], states[j]);
      if (c.a1_coeff.isZero(0.0)) {
        ++out.degenerate_pairs;
        continue;
      }
      const Vec a_j = nominals[j].cwiseMax(lo).cwiseMin(hi);
      rows.emplace_back(c.a1_coeff.transpose());
      rhs.push_back(-cfg.alpha * pair_h(states[i], states[j], cfg.r) - c.constant -
                    c.a2_coeff.dot(a_j));
    }
    out.n_constraints += static_cast<int>(rows.size());
    const Vec fallback = nominals[i].cwiseMax(lo).cwiseMin(hi);
    if (rows.empty()) {
      out.controls[i] = fallback;
      continue;
    }
    qp.A.resize(static_cast<Eigen::Index>(rows.size()), 2);
    qp.b.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      qp.A.row(k) = rows[k];
      qp.b(k) = rhs[k];
    }
    const QpSolution s = solve_qp(qp);
    out.controls[i] = s.feasible ? s.u : fallback;
    out.fallback[i] = !s.feasible;
  }
  out.solve_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace gcbf
