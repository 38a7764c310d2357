// Copyright 2026 The gcbf-swarm Authors
// SPDX-License-Identifier: Apache-2.0

#include "gcbf/safectl.hpp"

#include <algorithm>

namespace gcbf {

namespace {

Vec clamp_box(const Vec& u, const Vec& lo, const Vec& hi) { return u.cwiseMax(lo).cwiseMin(hi); }

}  // namespace

std::string to_string(ControlMode mode) {
  switch (mode) {
    case ControlMode::Nominal: return "nominal";
    case ControlMode::Learned: return "learned";
    case ControlMode::Refined: return "refined";
  }
  return "unknown";
}

LocalCertificate::LocalCertificate(const GcbfNetParams& net, const DynamicsModel& model,
                                   const GraphSnapshot& graph, int agent, const Mat& u_nom,
                                   double dt)
    : net_(&net), model_(&model), dt_(dt) {
  require(agent >= 0 && agent < graph.n_agents, "agent index out of range");
  require(u_nom.rows() == graph.n_agents && u_nom.cols() == model.control_dim,
          "u_nom must be n_agents x control_dim");
  require(dt > 0, "dt must be positive");
  x_ = graph.agents[agent].x;
  const std::vector<int> edges = graph.in_edges(agent);
  const Eigen::Index E = static_cast<Eigen::Index>(edges.size());
  flags_.resize(E, 1);
  neighbor_emb_.resize(E, model.edge_dim());
  for (Eigen::Index k = 0; k < E; ++k) {
    const Edge& e = graph.edges[edges[k]];
    flags_(k, 0) = e.type_flag;
    Vec xs = graph.node_states.row(e.src).transpose();
    if (graph.is_agent(e.src)) xs = step(model, xs, u_nom.row(e.src).transpose(), dt);
    neighbor_emb_.row(k) = node_embedding(model, xs).transpose();
  }
  h_ = gcbf_forward(net, model, graph, agent).h;
}

std::pair<double, Vec> LocalCertificate::hdot_with_grad(const Vec& u) const {
  require(u.size() == model_->control_dim, "control dimension mismatch");
  ad::Tape tape;
  const ad::Var uv = tape.variable(u.transpose());
  const ad::Var next = virtual_step(tape, *model_, x_.transpose(), uv, dt_);
  const ad::Var emb = node_embedding(*model_, next);
  const std::vector<int> zeros(static_cast<std::size_t>(flags_.rows()), 0);
  EdgeBatch batch;
  batch.n_agents = 1;
  batch.dst = zeros;
  batch.inputs = ad::concat_cols(
      {tape.constant_ref(flags_), ad::sub(tape.constant_ref(neighbor_emb_), ad::gather_rows(emb, zeros))});
  const ad::Var h_next = gcbf_values(tape, *net_, batch, false);
  const ad::Var hdot = ad::scale(ad::add_scalar(h_next, -h_), 1.0 / dt_);
  tape.backward(hdot);
  return {hdot.scalar(), uv.grad().row(0).transpose()};
}

double LocalCertificate::hdot(const Vec& u) const {
  require(u.size() == model_->control_dim, "control dimension mismatch");
  ad::Tape tape;
  const ad::Var next = virtual_step(tape, *model_, x_.transpose(), tape.constant(u.transpose()), dt_);
  const ad::Var emb = node_embedding(*model_, next);
  const std::vector<int> zeros(static_cast<std::size_t>(flags_.rows()), 0);
  EdgeBatch batch;
  batch.n_agents = 1;
  batch.dst = zeros;
  batch.inputs = ad::concat_cols(
      {tape.constant_ref(flags_), ad::sub(tape.constant_ref(neighbor_emb_), ad::gather_rows(emb, zeros))});
  const double h_next = gcbf_values(tape, *net_, batch, false).scalar();
  return (h_next - h_) / dt_;
}

std::vector<bool> check_safe(const GcbfNetParams& net, const DynamicsModel& model,
                             const GraphSnapshot& graph, const Mat& candidates, const Mat& u_nom,
                             double dt, double alpha) {
  require(candidates.rows() == graph.n_agents && candidates.cols() == model.control_dim,
          "candidates must be n_agents x control_dim");
  std::vector<bool> out(graph.n_agents);
  for (int i = 0; i < graph.n_agents; ++i) {
    const LocalCertificate cert(net, model, graph, i, u_nom, dt);
    out[i] = cert.hdot(candidates.row(i).transpose()) + alpha * cert.h() >= 0.0;
  }
  return out;
}

DescentResult descend_residue(const std::function<std::pair<double, Vec>(const Vec&)>& residue,
                              const Vec& u0, const Vec& lo, const Vec& hi, int max_iters,
                              double step_size) {
  require(step_size > 0, "step size must be positive");
  require(max_iters >= 0, "iteration cap must be non-negative");
  Vec u = clamp_box(u0, lo, hi);
  auto [delta, grad] = residue(u);
  DescentResult best{u, delta, 0};
  int it = 0;
  while (it < max_iters && delta > 0.0) {
    u = clamp_box(u - step_size * grad, lo, hi);
    std::tie(delta, grad) = residue(u);
    ++it;
    if (delta < best.residue) best = {u, delta, 0};
  }
  best.iters = it;
  return best;
}

DescentResult refine(const LocalCertificate& cert, const DynamicsModel& model, const Vec& u,
                     double alpha, const RefineConfig& config) {
  const double floor = config.margin - alpha * cert.h();
  auto residue = [&](const Vec& v) -> std::pair<double, Vec> {
    auto [hdot, g] = cert.hdot_with_grad(v);
    const double delta = floor - hdot;
    if (delta <= 0.0) return {0.0, Vec::Zero(v.size())};
    return {delta, -g};
  };
  return descend_residue(residue, u, model.control_lo, model.control_hi, config.max_iters,
                         config.step_size);
}

std::vector<ControlDecision> select_controls(const Networks& nets, const DynamicsModel& model,
                                             const GraphSnapshot& graph, const Mat& u_nom,
                                             double dt, double alpha, const RefineConfig& config) {
  std::vector<ControlDecision> out(graph.n_agents);
  for (int i = 0; i < graph.n_agents; ++i) {
    const LocalCertificate cert(nets.gcbf, model, graph, i, u_nom, dt);
    const Vec un = u_nom.row(i).transpose();
    ControlDecision& d = out[i];
    d.h_value = cert.h();
    const double hdot_nom = cert.hdot(un);
    if (hdot_nom + alpha * cert.h() >= 0.0) {
      d.control = un;
      d.mode = ControlMode::Nominal;
      d.hdot_value = hdot_nom;
    } else {
      const Vec learned = policy_forward(nets.policy, model, graph, i, un);
      const DescentResult r = refine(cert, model, learned, alpha, config);
      d.control = r.u;
      d.refine_iters = r.iters;
      d.mode = r.u == learned ? ControlMode::Learned : ControlMode::Refined;
      d.hdot_value = cert.hdot(d.control);
    }
    d.residue = std::max(0.0, config.margin - d.hdot_value - alpha * d.h_value);
  }
  return out;
}

}  // namespace gcbf
