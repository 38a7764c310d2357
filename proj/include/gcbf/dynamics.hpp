// Copyright 2026 The gcbf-swarm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <string_view>

#include "gcbf/common.hpp"

namespace gcbf {

enum class ModelKind { SimpleCar, DubinsCar, SimpleDrone, CrazyFlie };

std::string to_string(ModelKind kind);
/// Throws ConfigError on an unknown name.
ModelKind parse_model_kind(std::string_view name);

/// Physical constants of the CrazyFlie quadrotor.
struct CrazyFlieParams {
  double m = 0.0299;        // kg
  double I_xx = 1.395e-5;   // kg m^2
  double I_yy = 1.395e-5;
  double I_zz = 2.173e-5;
  double C_T = 3.1582e-10;  // N / rpm^2
  double C_D = 7.9379e-12;  // N / rpm^2
  double d = 0.03973;       // m
  double g = 9.8;

  double hover_thrust() const { return m * g; }
};

/// Continuous-time agent model plus the limits applied when it is stepped.
///
/// All models are control-affine with a constant input matrix:
/// x_dot = f(x) + G u. The nominal LQR gain is computed once on
/// construction so that the model can be shared read-only between threads.
struct DynamicsModel {
  ModelKind kind = ModelKind::SimpleCar;
  int state_dim = 4;
  int control_dim = 2;
  int space_dim = 2;
  Vec control_lo;
  Vec control_hi;
  double speed_bound = 0.8;  // u_M
  /// Velocity block [speed_begin, speed_begin + speed_count) clamped to speed_bound.
  int speed_begin = 2;
  int speed_count = 2;
  CrazyFlieParams quad;
  Mat lqr_gain;  // control_dim x state_dim
  double lqr_dt = 0.03;

  int edge_dim() const { return kind == ModelKind::DubinsCar ? 5 : state_dim; }
};

/// Builds a model with the default limits (u_M = 0.8 in 2D, 0.6 in 3D).
DynamicsModel make_model(ModelKind kind);
DynamicsModel make_model(ModelKind kind, double speed_bound);

/// F(x, u) as printed for each environment.
Vec derivative(const DynamicsModel& model, const Vec& x, const Vec& u);
/// f(x) = F(x, 0).
Vec drift(const DynamicsModel& model, const Vec& x);
/// Constant G with F(x, u) = f(x) + G u.
Mat input_matrix(const DynamicsModel& model);

Vec clamp_control(const DynamicsModel& model, const Vec& u);
/// Scales the velocity block down to speed_bound if it exceeds it.
void clamp_speed(const DynamicsModel& model, Vec& x);
/// One forward-Euler step with clamped control and clamped resulting speed.
Vec step(const DynamicsModel& model, const Vec& x, const Vec& u, double dt);

/// Goal-reaching controller: LQR for the linear models and CrazyFlie, PID-style
/// heading/speed law for DubinsCar. Output is clamped to the control bounds.
Vec nominal_control(const DynamicsModel& model, const Vec& x, const Vec& goal);

/// Reference state for the LQR (goal position, everything else at rest).
Vec goal_state(const DynamicsModel& model, const Vec& goal);

/// (U1, U2, U3, U4) from four motor speeds in rpm.
Eigen::Vector4d motor_mix(const CrazyFlieParams& params, const std::array<double, 4>& motor_rpm);
Eigen::Matrix4d mixing_matrix(const CrazyFlieParams& params);

/// e(x): the per-node embedding that edge features are differences of.
Vec node_embedding(const DynamicsModel& model, const Vec& x);
/// e_ij = e(x_j) - e(x_i).
Vec edge_feature(const DynamicsModel& model, const Vec& x_i, const Vec& x_j);

Vec position(const DynamicsModel& model, const Vec& x);
/// State at rest at point p (used for LiDAR virtual nodes).
Vec state_at_point(const DynamicsModel& model, const Vec& p);

/// Infinite-horizon discrete LQR gain K (u = -K x) by iterating the Riccati
/// recursion until the value matrix changes by less than tol.
Mat dlqr(const Mat& A, const Mat& B, const Mat& Q, const Mat& R, double tol = 1e-9,
         int max_iter = 200000);

struct DubinsGains {
  double k_heading = 3.0;
  double k_speed = 1.0;
};

}  // namespace gcbf
