// Copyright 2026 The gcbf-swarm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gcbf/autodiff.hpp"
#include "gcbf/dynamics.hpp"
#include "gcbf/world.hpp"

namespace gcbf {

/// Fully connected layers with ReLU between them and a linear output.
struct Mlp {
  struct Layer {
    ad::Parameter weight;  // in x out
    ad::Parameter bias;    // 1 x out
  };
  std::vector<Layer> layers;

  int in_dim() const { return static_cast<int>(layers.front().weight.value.rows()); }
  int out_dim() const { return static_cast<int>(layers.back().weight.value.cols()); }
  std::vector<int> widths() const;
  ad::Var forward(ad::Tape& tape, const ad::Var& x, bool trainable) const;
};

/// Edge encoder, attention gate, and value map shared by both networks.
struct GnnBackbone {
  Mlp embed;  // [v_j, e_ij] -> q_ij
  Mlp gate;   // q_ij -> attention logit
  Mlp value;  // q_ij -> message
};

struct GcbfNetParams {
  GnnBackbone backbone;
  Mlp head;  // aggregated message -> h_i
};

struct PolicyNetParams {
  GnnBackbone backbone;
  Mlp head;  // [aggregated message, u_nom] -> deviation from u_nom
};

/// Layer sizes at a given width scale. Full scale is embed 2048x2 -> 256,
/// gate 128x2 -> 1, value 2048x2 -> 1024, head 512-128-32 -> 1.
struct NetDims {
  int edge_in = 0;
  int embed_hidden = 0;
  int embed_out = 0;
  int gate_hidden = 0;
  int value_hidden = 0;
  int value_out = 0;
  std::vector<int> head_hidden;
  int control_dim = 0;
};

NetDims net_dims(const DynamicsModel& model, double scale);

struct Networks {
  ModelKind model = ModelKind::SimpleCar;
  double scale = 0.125;
  std::uint64_t step = 0;
  GcbfNetParams gcbf;
  PolicyNetParams policy;

  std::vector<const ad::Parameter*> gcbf_parameters() const;
  std::vector<const ad::Parameter*> policy_parameters() const;
  std::vector<ad::Parameter*> gcbf_parameters();
  std::vector<ad::Parameter*> policy_parameters();
};

/// Kaiming-uniform hidden layers, zero biases, zero final policy layer.
Networks init_networks(const DynamicsModel& model, std::uint64_t seed, double scale);

/// Edges of a graph laid out for batched evaluation: inputs row e is [v_j, e_ij].
struct EdgeBatch {
  ad::Var inputs;
  std::vector<int> dst;
  int n_agents = 0;
};

/// e(x) row-wise for a stack of states (identity except DubinsCar).
ad::Var node_embedding(const DynamicsModel& model, const ad::Var& states);

/// Edge inputs from differentiable node states (rows follow graph.node_states).
EdgeBatch make_edge_batch(const DynamicsModel& model, const GraphSnapshot& graph,
                          const ad::Var& node_states);
/// Edge inputs from the graph's own node states as constants.
EdgeBatch make_edge_batch(ad::Tape& tape, const DynamicsModel& model, const GraphSnapshot& graph);

struct BackboneOut {
  ad::Var aggregated;  // n_agents x value_out, zero rows for isolated agents
  ad::Var attention;   // E x 1
};

BackboneOut backbone_forward(ad::Tape& tape, const GnnBackbone& net, const EdgeBatch& batch,
                             bool trainable);

/// h_i for every agent (n_agents x 1).
ad::Var gcbf_values(ad::Tape& tape, const GcbfNetParams& net, const EdgeBatch& batch,
                    bool trainable, ad::Var* attention = nullptr);

struct PolicyOut {
  ad::Var control;    // clamp(u_nom + deviation)
  ad::Var deviation;  // raw head output
};

PolicyOut policy_controls(ad::Tape& tape, const PolicyNetParams& net, const DynamicsModel& model,
                          const EdgeBatch& batch, const ad::Var& u_nom, bool trainable);

/// One Euler step on a stack of states with clamped controls and speed.
/// Matches dynamics::step row by row.
ad::Var virtual_step(ad::Tape& tape, const DynamicsModel& model, const Mat& states,
                     const ad::Var& controls, double dt);

/// Graph node states after moving the agents to `agent_states`; LiDAR nodes stay put.
ad::Var with_agent_states(ad::Tape& tape, const GraphSnapshot& graph, const ad::Var& agent_states);

struct GcbfEval {
  double h = 0.0;
  std::vector<double> attention;  // one per in-edge, in graph.in_edges order
};

/// h_i evaluated on agent i's in-edges only.
GcbfEval gcbf_forward(const GcbfNetParams& net, const DynamicsModel& model,
                      const GraphSnapshot& graph, int agent);
Vec policy_forward(const PolicyNetParams& net, const DynamicsModel& model,
                   const GraphSnapshot& graph, int agent, const Vec& u_nom);

/// u_nom for every agent in the graph (n_agents x control_dim).
Mat nominal_controls(const DynamicsModel& model, const GraphSnapshot& graph);

/// Binary checkpoint: named slots with shapes and little-endian f64 data,
/// plus model kind, width scale, and the training-step counter.
void save_checkpoint(const Networks& nets, const std::string& path);
Networks load_checkpoint(const std::string& path);

}  // namespace gcbf
