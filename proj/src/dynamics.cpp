// Copyright 2026 The gcbf-swarm Authors
// SPDX-License-Identifier: Apache-2.0

#include "gcbf/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gcbf {

namespace {

constexpr double kDefaultAccelBound = 10.0;
constexpr double kDubinsOmegaBound = 5.0;
constexpr double kQuadMomentBound = 1e-3;

void check_dims(const DynamicsModel& model, const Vec& x, const Vec& u) {
  require(x.size() == model.state_dim, "state dimension mismatch for " + to_string(model.kind));
  require(u.size() == model.control_dim,
          "control dimension mismatch for " + to_string(model.kind));
}

double wrap_angle(double a) {
  a = std::fmod(a + std::numbers::pi, 2.0 * std::numbers::pi);
  if (a < 0) a += 2.0 * std::numbers::pi;
  return a - std::numbers::pi;
}

// Jacobians of the hover linearization; for the linear models these are exact.
void linearization(const DynamicsModel& model, Mat& A, Mat& B) {
  const int n = model.state_dim;
  A = Mat::Zero(n, n);
  B = input_matrix(model);
  switch (model.kind) {
    case ModelKind::SimpleCar:
      A(0, 2) = 1.0;
      A(1, 3) = 1.0;
      break;
    case ModelKind::SimpleDrone:
      for (int k = 0; k < 3; ++k) A(k, 3 + k) = 1.0;
      A(3, 3) = -1.1;
      A(4, 4) = -1.1;
      A(5, 5) = -6.0;
      break;
    case ModelKind::CrazyFlie: {
      const double g = model.quad.g;
      A(0, 3) = 1.0;   // px <- u
      A(1, 4) = 1.0;   // py <- v
      A(2, 5) = 1.0;   // pz <- w
      A(3, 7) = g;     // u_dot <- theta
      A(4, 6) = -g;    // v_dot <- phi
      A(6, 9) = 1.0;   // phi_dot <- r
      A(7, 10) = 1.0;  // theta_dot <- q
      A(8, 11) = 1.0;  // psi_dot <- p
      break;
    }
    case ModelKind::DubinsCar:
      break;
  }
}

Mat compute_lqr_gain(const DynamicsModel& model) {
  if (model.kind == ModelKind::DubinsCar) return Mat();
  Mat A, B;
  linearization(model, A, B);
  const int n = model.state_dim;
  const int m = model.control_dim;
  Mat Ad = Mat::Identity(n, n) + model.lqr_dt * A;
  Mat Bd = model.lqr_dt * B;
  Mat Q = Mat::Identity(n, n);
  Mat R = Mat::Identity(m, m);
  if (model.kind == ModelKind::CrazyFlie) {
    for (int k = 0; k < m; ++k) {
      const double span = 0.5 * (model.control_hi(k) - model.control_lo(k));
      R(k, k) = 1.0 / (span * span);
    }
  }
  return dlqr(Ad, Bd, Q, R);
}

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::SimpleCar: return "SimpleCar";
    case ModelKind::DubinsCar: return "DubinsCar";
    case ModelKind::SimpleDrone: return "SimpleDrone";
    case ModelKind::CrazyFlie: return "CrazyFlie";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "SimpleCar") return ModelKind::SimpleCar;
  if (name == "DubinsCar") return ModelKind::DubinsCar;
  if (name == "SimpleDrone") return ModelKind::SimpleDrone;
  if (name == "CrazyFlie") return ModelKind::CrazyFlie;
  throw ConfigError("unknown model kind '" + std::string(name) + "'");
}

DynamicsModel make_model(ModelKind kind) {
  const bool flat = kind == ModelKind::SimpleCar || kind == ModelKind::DubinsCar;
  return make_model(kind, flat ? 0.8 : 0.6);
}

DynamicsModel make_model(ModelKind kind, double speed_bound) {
  require(speed_bound > 0, "speed bound must be positive");
  DynamicsModel model;
  model.kind = kind;
  model.speed_bound = speed_bound;
  switch (kind) {
    case ModelKind::SimpleCar:
      model.state_dim = 4;
      model.control_dim = 2;
      model.space_dim = 2;
      model.speed_begin = 2;
      model.speed_count = 2;
      model.control_hi = Vec::Constant(2, kDefaultAccelBound);
      break;
    case ModelKind::DubinsCar:
      model.state_dim = 4;
      model.control_dim = 2;
      model.space_dim = 2;
      model.speed_begin = 3;
      model.speed_count = 1;
      model.control_hi = Vec(2);
      model.control_hi << kDubinsOmegaBound, kDefaultAccelBound;
      break;
    case ModelKind::SimpleDrone:
      model.state_dim = 6;
      model.control_dim = 3;
      model.space_dim = 3;
      model.speed_begin = 3;
      model.speed_count = 3;
      model.control_hi = Vec::Constant(3, kDefaultAccelBound);
      break;
    case ModelKind::CrazyFlie:
      model.state_dim = 12;
      model.control_dim = 4;
      model.space_dim = 3;
      model.speed_begin = 3;
      model.speed_count = 3;
      model.control_hi = Vec(4);
      model.control_hi << 2.0 * model.quad.hover_thrust(), kQuadMomentBound, kQuadMomentBound,
          kQuadMomentBound;
      break;
  }
  model.control_lo = -model.control_hi;
  if (kind == ModelKind::CrazyFlie) model.control_lo(0) = 0.0;
  model.lqr_gain = compute_lqr_gain(model);
  return model;
}

Vec derivative(const DynamicsModel& model, const Vec& x, const Vec& u) {
  check_dims(model, x, u);
  Vec dx(model.state_dim);
  switch (model.kind) {
    case ModelKind::SimpleCar:
      dx << x(2), x(3), u(0), u(1);
      break;
    case ModelKind::DubinsCar:
      dx << x(3) * std::cos(x(2)), x(3) * std::sin(x(2)), u(0), u(1);
      break;
    case ModelKind::SimpleDrone:
      dx << x(3), x(4), x(5), -1.1 * x(3) + 1.1 * u(0), -1.1 * x(4) + 1.1 * u(1),
          -6.0 * x(5) + 6.0 * u(2);
      break;
    case ModelKind::CrazyFlie: {
      const CrazyFlieParams& c = model.quad;
      // body velocities (u, v, w), Euler angles, body rates (r, q, p)
      const double bu = x(3), bv = x(4), bw = x(5);
      const double phi = x(6), theta = x(7), psi = x(8);
      const double r = x(9), q = x(10), p = x(11);
      const double cphi = std::cos(phi), sphi = std::sin(phi);
      const double cth = std::cos(theta), sth = std::sin(theta), tth = std::tan(theta);
      const double cpsi = std::cos(psi), spsi = std::sin(psi);
      dx(0) = (cphi * cpsi * sth + sphi * spsi) * bw - (spsi * cphi - cpsi * sphi * sth) * bv +
              bu * cpsi * cth;
      dx(1) = (sphi * spsi * sth + cphi * cpsi) * bv - (cpsi * sphi - spsi * cphi * sth) * bw +
              bu * spsi * cth;
      dx(2) = bw * cpsi * cphi - bu * sth + bv * sphi * cth;
      dx(3) = r * bv - q * bw + c.g * sth;
      dx(4) = p * bw - r * bu - c.g * sphi * cth;
      dx(5) = q * bu - p * bv + u(0) / c.m - c.g * cth * cphi;
      dx(6) = r * cphi / cth + q * sphi / cth;
      dx(7) = q * cphi - r * sphi;
      dx(8) = p + r * cphi * tth + q * sphi * tth;
      dx(9) = (u(1) - p * q * (c.I_yy - c.I_xx)) / c.I_zz;
      dx(10) = (u(2) - p * r * (c.I_xx - c.I_zz)) / c.I_yy;
      dx(11) = (u(3) + q * r * (c.I_zz - c.I_yy)) / c.I_xx;
      break;
    }
  }
  return dx;
}

Vec drift(const DynamicsModel& model, const Vec& x) {
  return derivative(model, x, Vec::Zero(model.control_dim));
}

Mat input_matrix(const DynamicsModel& model) {
  Mat G = Mat::Zero(model.state_dim, model.control_dim);
  switch (model.kind) {
    case ModelKind::SimpleCar:
      G(2, 0) = 1.0;
      G(3, 1) = 1.0;
      break;
    case ModelKind::DubinsCar:
      G(2, 0) = 1.0;
      G(3, 1) = 1.0;
      break;
    case ModelKind::SimpleDrone:
      G(3, 0) = 1.1;
      G(4, 1) = 1.1;
      G(5, 2) = 6.0;
      break;
    case ModelKind::CrazyFlie:
      G(5, 0) = 1.0 / model.quad.m;
      G(9, 1) = 1.0 / model.quad.I_zz;
      G(10, 2) = 1.0 / model.quad.I_yy;
      G(11, 3) = 1.0 / model.quad.I_xx;
      break;
  }
  return G;
}

Vec clamp_control(const DynamicsModel& model, const Vec& u) {
  require(u.size() == model.control_dim, "control dimension mismatch");
  return u.cwiseMax(model.control_lo).cwiseMin(model.control_hi);
}

void clamp_speed(const DynamicsModel& model, Vec& x) {
  auto vel = x.segment(model.speed_begin, model.speed_count);
  const double speed = vel.norm();
  if (speed > model.speed_bound) vel *= model.speed_bound / speed;
}

Vec step(const DynamicsModel& model, const Vec& x, const Vec& u, double dt) {
  require(dt > 0, "dt must be positive");
  const Vec applied = clamp_control(model, u);
  Vec next = x + dt * derivative(model, x, applied);
  clamp_speed(model, next);
  return next;
}

Vec goal_state(const DynamicsModel& model, const Vec& goal) {
  require(goal.size() == model.space_dim, "goal dimension mismatch");
  Vec ref = Vec::Zero(model.state_dim);
  ref.head(model.space_dim) = goal;
  return ref;
}

Vec nominal_control(const DynamicsModel& model, const Vec& x, const Vec& goal) {
  require(x.size() == model.state_dim, "state dimension mismatch");
  require(goal.allFinite(), "goal must be finite");
  Vec u;
  if (model.kind == ModelKind::DubinsCar) {
    const DubinsGains gains;
    const double dx = goal(0) - x(0);
    const double dy = goal(1) - x(1);
    const double dist = std::hypot(dx, dy);
    double heading_err = 0.0;
    if (dist > 1e-6) heading_err = wrap_angle(std::atan2(dy, dx) - x(2));
    const double v_target =
        std::min(model.speed_bound, gains.k_speed * dist) * std::cos(heading_err);
    u = Vec(2);
    u << gains.k_heading * heading_err, gains.k_speed * (v_target - x(3));
  } else {
    u = -model.lqr_gain * (x - goal_state(model, goal));
    if (model.kind == ModelKind::CrazyFlie) u(0) += model.quad.hover_thrust();
  }
  return clamp_control(model, u);
}

Eigen::Matrix4d mixing_matrix(const CrazyFlieParams& c) {
  const double a = c.d * c.C_T * std::numbers::sqrt2;
  Eigen::Matrix4d M;
  M << c.C_T, c.C_T, c.C_T, c.C_T,
       -a, -a, a, a,
       -a, a, a, -a,
       -c.C_D, c.C_D, -c.C_D, c.C_D;
  return M;
}

Eigen::Vector4d motor_mix(const CrazyFlieParams& params, const std::array<double, 4>& motor_rpm) {
  Eigen::Vector4d sq;
  for (int k = 0; k < 4; ++k) {
    require(motor_rpm[k] >= 0.0, "motor speeds must be non-negative");
    sq(k) = motor_rpm[k] * motor_rpm[k];
  }
  return mixing_matrix(params) * sq;
}

Vec node_embedding(const DynamicsModel& model, const Vec& x) {
  require(x.size() == model.state_dim, "state dimension mismatch");
  if (model.kind != ModelKind::DubinsCar) return x;
  Vec e(5);
  e << x(0), x(1), x(3) * std::cos(x(2)), x(3) * std::sin(x(2)), x(2);
  return e;
}

Vec edge_feature(const DynamicsModel& model, const Vec& x_i, const Vec& x_j) {
  return node_embedding(model, x_j) - node_embedding(model, x_i);
}

Vec position(const DynamicsModel& model, const Vec& x) { return x.head(model.space_dim); }

Vec state_at_point(const DynamicsModel& model, const Vec& p) {
  require(p.size() == model.space_dim, "point dimension mismatch");
  Vec x = Vec::Zero(model.state_dim);
  x.head(model.space_dim) = p;
  return x;
}

Mat dlqr(const Mat& A, const Mat& B, const Mat& Q, const Mat& R, double tol, int max_iter) {
  Mat P = Q;
  Mat K;
  for (int it = 0; it < max_iter; ++it) {
    const Mat BtP = B.transpose() * P;
    K = (R + BtP * B).ldlt().solve(BtP * A);
    Mat next = Q + A.transpose() * P * (A - B * K);
    next = 0.5 * (next + next.transpose()).eval();
    const double diff = (next - P).cwiseAbs().maxCoeff();
    P = std::move(next);
    if (diff < tol * std::max(1.0, P.cwiseAbs().maxCoeff())) break;
  }
  const Mat BtP = B.transpose() * P;
  return (R + BtP * B).ldlt().solve(BtP * A);
}

}  // namespace gcbf
