// Copyright 2026 The gcbf-swarm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <functional>
#include <initializer_list>
#include <limits>
#include <random>
#include <vector>

#include "gcbf/learner.hpp"

namespace gcbf::testing {

inline Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) out(k++) = x;
  return out;
}

inline AgentState make_agent(const Vec& x, const Vec& goal, int id) {
  AgentState a;
  a.x = x;
  a.goal = goal;
  a.id = id;
  return a;
}

// Perturbs every parameter; the policy output layer stops being zero and
// the learned deviation stays well inside the control bounds.
inline void randomize(Networks& nets, std::uint64_t seed, double policy_sd = 0.05,
                      double gcbf_sd = 0.03) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0, 1);
  for (auto* p : nets.policy_parameters())
    for (Eigen::Index k = 0; k < p->value.size(); ++k) p->value.data()[k] += 0.01 * N(rng);
  auto& last = nets.policy.head.layers.back();
  for (Mat* w : {&last.weight.value, &last.bias.value})
    for (Eigen::Index k = 0; k < w->size(); ++k) w->data()[k] += policy_sd * N(rng);
  for (auto* p : nets.gcbf_parameters())
    for (Eigen::Index k = 0; k < p->value.size(); ++k) p->value.data()[k] += gcbf_sd * N(rng);
}

inline Mlp::Layer layer(const Mat& w, const Mat& b) {
  return {ad::Parameter("w", w), ad::Parameter("b", b)};
}

// Hand-built SimpleCar certificate: for one neighbor,
//   h = |dx + tau dvx| + |dy + tau dvy| - c,
// the L1 gap predicted tau seconds ahead (e = x_j - x_i). Several neighbors
// average through the uniform attention; no neighbor gives h = 0. The policy
// returns u_nom unchanged.
inline Networks probe_networks(double tau, double c) {
  constexpr double kShift = 10.0;  // keeps value/head ReLUs in their linear range
  Networks nets;
  nets.model = ModelKind::SimpleCar;
  GnnBackbone bb;
  Mat w0 = Mat::Zero(5, 4);
  w0(1, 0) = 1;
  w0(3, 0) = tau;
  w0(1, 1) = -1;
  w0(3, 1) = -tau;
  w0(2, 2) = 1;
  w0(4, 2) = tau;
  w0(2, 3) = -1;
  w0(4, 3) = -tau;
  bb.embed.layers = {layer(w0, Mat::Zero(1, 4)), layer(Mat::Identity(4, 4), Mat::Zero(1, 4)),
                     layer(Mat::Ones(4, 1), Mat::Constant(1, 1, -c))};
  bb.gate.layers = {layer(Mat::Zero(1, 1), Mat::Zero(1, 1)), layer(Mat::Zero(1, 1), Mat::Zero(1, 1))};
  bb.value.layers = {layer(Mat::Ones(1, 1), Mat::Constant(1, 1, kShift)),
                     layer(Mat::Ones(1, 1), Mat::Constant(1, 1, -kShift))};
  nets.gcbf.backbone = bb;
  nets.gcbf.head.layers = {layer(Mat::Ones(1, 1), Mat::Zero(1, 1))};
  nets.policy.backbone = bb;
  nets.policy.head.layers = {layer(Mat::Zero(3, 2), Mat::Zero(1, 2))};
  return nets;
}

// Oracle for probe_networks with a single neighbor.
inline double probe_h(const Vec& xi, const Vec& xj, double tau, double c) {
  const Vec e = xj - xi;
  return std::abs(e(0) + tau * e(2)) + std::abs(e(1) + tau * e(3)) - c;
}

// Three slow SimpleCars inside each other's range with nearby goals, so
// nominal controls stay well inside the bounds.
// Agent 1 sits `spacing` to the right of agent 0 and agent 2 sits `lift`
// above it; the default lift gives an L-shaped triangle.
inline std::vector<TrainSample> micro_batch(const Networks& nets, std::uint64_t seed, int steps,
                                            double spacing = 0.3, double lift = -1.0) {
  const DynamicsModel m = make_model(ModelKind::SimpleCar);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1, 1);
  RolloutState st;
  st.scenario = default_scenario(ModelKind::SimpleCar, 3, Suite::KeepDensity, seed);
  if (lift < 0) lift = spacing;
  const Vec base[3] = {vec({1.0, 1.0}), vec({1.0 + spacing, 1.0}), vec({1.0, 1.0 + lift})};
  for (int i = 0; i < 3; ++i) {
    Vec x = vec({base[i](0) + 0.02 * U(rng), base[i](1) + 0.02 * U(rng), 0.2 * U(rng), 0.2 * U(rng)});
    Vec goal = base[i] + vec({0.1 * U(rng), 0.1 * U(rng)});
    st.agents.push_back(make_agent(x, goal, i));
  }
  return collect_rollout(nets, m, st, 0.0, steps, rng);
}

// Central differences of the full loss over a subset of parameter coordinates.
struct LossGradCheck {
  double max_rel_error = 0.0;
  int coordinates = 0;
  double max_abs_grad = 0.0;
};

// The loss is piecewise smooth (ReLU and hinge kinks). For each step the
// central and both one-sided second-order differences are compared; they only
// agree when no kink lies inside the stencil, so the step shrinks until they do.
inline double adaptive_central_difference(const std::function<double()>& eval, double& w) {
  const double orig = w;
  auto at = [&](double d) {
    w = orig + d;
    const double v = eval();
    w = orig;
    return v;
  };
  const double f0 = at(0.0);
  double central = 0.0;
  const double noise = 64 * std::numeric_limits<double>::epsilon() * std::abs(f0);
  for (double h = 1e-3; h >= 1e-8; h *= 0.25) {
    const double p1 = at(h), p2 = at(2 * h), m1 = at(-h), m2 = at(-2 * h);
    central = (p1 - m1) / (2 * h);
    const double right = (-3 * f0 + 4 * p1 - p2) / (2 * h);
    const double left = (3 * f0 - 4 * m1 + m2) / (2 * h);
    const double tol = 1e-5 * (std::abs(central) + 1e-8) + noise / h;
    if (std::abs(right - central) <= tol && std::abs(left - central) <= tol) return central;
  }
  return central;
}

inline LossGradCheck check_loss_gradient(Networks& nets, std::span<const TrainSample> batch,
                                         const TrainConfig& config, int per_tensor,
                                         std::uint64_t seed) {
  const DynamicsModel m = make_model(config.model);
  auto all = nets.gcbf_parameters();
  for (auto* p : nets.policy_parameters()) all.push_back(p);
  for (auto* p : all) p->zero_grad();
  {
    ad::Tape tape;
    const LossOut loss = compute_loss(tape, nets, m, batch, config, true);
    tape.backward(loss.total);
  }
  const std::function<double()> eval = [&] {
    ad::Tape tape;
    return compute_loss(tape, nets, m, batch, config, false).terms.total;
  };
  std::mt19937_64 rng(seed);
  LossGradCheck out;
  for (auto* p : all) {
    std::uniform_int_distribution<Eigen::Index> pick(0, p->value.size() - 1);
    for (int k = 0; k < per_tensor; ++k) {
      const Eigen::Index idx = pick(rng);
      const double fd = adaptive_central_difference(eval, p->value.data()[idx]);
      const double ad = p->grad.data()[idx];
      out.max_rel_error = std::max(out.max_rel_error, std::abs(ad - fd) / (std::abs(fd) + 1e-8));
      out.max_abs_grad = std::max(out.max_abs_grad, std::abs(ad));
      ++out.coordinates;
    }
  }
  return out;
}

}  // namespace gcbf::testing
