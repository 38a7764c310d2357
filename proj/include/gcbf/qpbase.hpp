// Copyright 2026 The gcbf-swarm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "gcbf/common.hpp"

namespace gcbf {

/// Pairwise handcrafted barrier for double integrators, x = [px, py, vx, vy]:
/// h = 2 dp.dv + |dp|^2 - 4 r^2 with dp = p1 - p2, dv = v1 - v2.
double pair_h(const Vec& x1, const Vec& x2, double r);

/// hdot = constant + a1_coeff . a1 + a2_coeff . a2.
struct PairHdot {
  double constant = 0.0;
  Vec a1_coeff;
  Vec a2_coeff;
};
PairHdot pair_hdot_coeffs(const Vec& x1, const Vec& x2);

/// minimize 1/2 sum_k weight_k (u_k - target_k)^2  s.t.  A u >= b,  lo <= u <= hi.
struct QpProblem {
  Vec weight;
  Vec target;
  Mat A;
  Vec b;
  Vec lo;
  Vec hi;

  int n() const { return static_cast<int>(target.size()); }
};

/// Problem with unit weights and no constraints.
QpProblem make_qp(const Vec& target, const Vec& lo, const Vec& hi);

enum class QpMethod { ActiveSet, Admm };

struct QpSolution {
  Vec u;
  Vec lambda;        // multipliers of the A rows
  Vec lambda_lo;     // multipliers of the lower bounds
  Vec lambda_hi;     // multipliers of the upper bounds
  bool feasible = false;
  QpMethod method = QpMethod::ActiveSet;
  int iterations = 0;
  double kkt_residual = 0.0;
};

struct KktReport {
  double stationarity = 0.0;
  double primal = 0.0;         // largest constraint violation
  double dual = 0.0;           // most negative multiplier (as a positive number)
  double complementarity = 0.0;
  double max() const;
};

KktReport kkt_report(const QpProblem& problem, const QpSolution& solution);

/// Dual active-set method; falls back to ADMM when the active-set iteration
/// stalls or leaves a KKT residual above tol. Infeasible problems come back
/// with feasible = false.
QpSolution solve_qp(const QpProblem& problem, double tol = 1e-8, int max_iter = 10000);
QpSolution solve_qp_active_set(const QpProblem& problem, double tol = 1e-8, int max_iter = 10000);
QpSolution solve_qp_admm(const QpProblem& problem, double tol = 1e-8, int max_iter = 10000);

struct FilterResult {
  std::vector<Vec> controls;
  std::vector<bool> fallback;   // per agent: infeasible QP, nominal (clamped) used
  int degenerate_pairs = 0;     // rows dropped because dp = 0
  int n_constraints = 0;
  double solve_time_s = 0.0;    // wall clock for the whole step
};

struct FilterConfig {
  double alpha = 1.0;
  double r = 0.05;
  double sensing_radius = 1.0;
  double accel_bound = 10.0;
};

/// One joint QP over all agents with a constraint per pair within R.
FilterResult centralized_filter(const std::vector<Vec>& states, const std::vector<Vec>& nominals,
                                const FilterConfig& config);
/// One QP per agent with its neighbors' accelerations fixed to their nominals.
FilterResult decentralized_filter(const std::vector<Vec>& states,
                                  const std::vector<Vec>& nominals, const FilterConfig& config);

}  // namespace gcbf
