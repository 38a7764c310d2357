// Copyright 2026 The gcbf-swarm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "gcbf/nets.hpp"

namespace gcbf {

struct RefineConfig {
  int max_iters = 30;
  double step_size = 0.3;
  double margin = 0.02;  // gamma in the residue
};

enum class ControlMode { Nominal, Learned, Refined };
std::string to_string(ControlMode mode);

struct ControlDecision {
  Vec control;
  ControlMode mode = ControlMode::Nominal;
  double h_value = 0.0;
  double hdot_value = 0.0;
  double residue = 0.0;  // max(0, gamma - hdot - alpha h) of the returned control
  int refine_iters = 0;
};

/// Agent i's local view for one decision: its in-edges at t_k and the states
/// its neighbors reach in one step under their nominal controls.
class LocalCertificate {
 public:
  LocalCertificate(const GcbfNetParams& net, const DynamicsModel& model,
                   const GraphSnapshot& graph, int agent, const Mat& u_nom, double dt);

  double h() const { return h_; }
  /// Virtual-step estimate of hdot when agent i applies u.
  double hdot(const Vec& u) const;
  /// hdot and its gradient with respect to u.
  std::pair<double, Vec> hdot_with_grad(const Vec& u) const;

 private:
  const GcbfNetParams* net_;
  const DynamicsModel* model_;
  Vec x_;
  Mat flags_;        // E x 1
  Mat neighbor_emb_;  // E x edge_dim, e(x_j') with LiDAR nodes fixed
  double dt_;
  double h_ = 0.0;
};

/// Per agent: hdot + alpha h >= 0 when that agent applies its candidate and
/// every neighbor applies its nominal control.
std::vector<bool> check_safe(const GcbfNetParams& net, const DynamicsModel& model,
                             const GraphSnapshot& graph, const Mat& candidates, const Mat& u_nom,
                             double dt, double alpha);

/// Projected gradient descent on a residue with best-iterate reporting.
/// `residue` returns (delta, d delta / d u). Stops when delta reaches 0.
struct DescentResult {
  Vec u;
  double residue = 0.0;
  int iters = 0;
};
DescentResult descend_residue(const std::function<std::pair<double, Vec>(const Vec&)>& residue,
                              const Vec& u0, const Vec& lo, const Vec& hi, int max_iters,
                              double step_size);

/// Refines agent i's control to shrink max(0, gamma - hdot - alpha h).
DescentResult refine(const LocalCertificate& cert, const DynamicsModel& model, const Vec& u,
                     double alpha, const RefineConfig& config);

/// Switching controller: nominal when it passes the check, else pi_phi, refined
/// while its residue is positive.
std::vector<ControlDecision> select_controls(const Networks& nets, const DynamicsModel& model,
                                             const GraphSnapshot& graph, const Mat& u_nom,
                                             double dt, double alpha, const RefineConfig& config);

}  // namespace gcbf
