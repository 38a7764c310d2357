// Copyright 2026 The gcbf-swarm Authors
// SPDX-License-Identifier: Apache-2.0

#include "gcbf/nets.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace gcbf {

namespace {

int scaled(int full, double scale) {
  return std::max(1, static_cast<int>(std::lround(full * scale)));
}

Mlp make_mlp(const std::string& name, int in, const std::vector<int>& hidden, int out,
             std::mt19937_64& rng, bool zero_last) {
  Mlp mlp;
  std::vector<int> sizes = {in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    const int fan_in = sizes[k];
    const int fan_out = sizes[k + 1];
    const bool last = k + 2 == sizes.size();
    // He-uniform bound sqrt(6 / fan_in) before ReLU, sqrt(3 / fan_in) for the linear output.
    const double bound = std::sqrt((last ? 3.0 : 6.0) / fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    Mat W(fan_in, fan_out);
    if (last && zero_last) {
      W.setZero();
    } else {
      for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = dist(rng);
    }
    const std::string prefix = name + "." + std::to_string(k);
    mlp.layers.push_back({ad::Parameter(prefix + ".weight", std::move(W)),
                          ad::Parameter(prefix + ".bias", Mat::Zero(1, fan_out))});
  }
  return mlp;
}

GnnBackbone make_backbone(const std::string& name, const NetDims& d, std::mt19937_64& rng) {
  GnnBackbone b;
  b.embed = make_mlp(name + ".embed", d.edge_in, {d.embed_hidden, d.embed_hidden}, d.embed_out,
                     rng, false);
  b.gate = make_mlp(name + ".gate", d.embed_out, {d.gate_hidden, d.gate_hidden}, 1, rng, false);
  b.value = make_mlp(name + ".value", d.embed_out, {d.value_hidden, d.value_hidden}, d.value_out,
                     rng, false);
  return b;
}

template <typename P>
void collect(P& mlp, auto& out) {
  for (auto& l : mlp.layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
}

template <typename Net, typename Out>
void collect_net(Net& net, Out& out) {
  collect(net.backbone.embed, out);
  collect(net.backbone.gate, out);
  collect(net.backbone.value, out);
  collect(net.head, out);
}

ad::Var constant_edges(ad::Tape& tape, const GraphSnapshot& graph, const std::vector<int>& edges,
                       int edge_dim) {
  Mat in(static_cast<Eigen::Index>(edges.size()), edge_dim + 1);
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const Edge& e = graph.edges[edges[k]];
    in(k, 0) = e.type_flag;
    in.row(k).tail(edge_dim) = e.feature.transpose();
  }
  return tape.constant(std::move(in));
}

// Little-endian scalar I/O for the checkpoint format.
template <typename T>
void put(std::ostream& os, T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T)))
    throw ConfigError("checkpoint: unexpected end of file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
  const auto n = get<std::uint32_t>(is);
  if (n > (1u << 20)) throw ConfigError("checkpoint: implausible string length");
  std::string s(n, '\0');
  if (!is.read(s.data(), n)) throw ConfigError("checkpoint: unexpected end of file");
  return s;
}

constexpr char kMagic[8] = {'G', 'C', 'B', 'F', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

std::vector<int> Mlp::widths() const {
  std::vector<int> w = {in_dim()};
  for (const auto& l : layers) w.push_back(static_cast<int>(l.weight.value.cols()));
  return w;
}

ad::Var Mlp::forward(ad::Tape& tape, const ad::Var& x, bool trainable) const {
  ad::Var h = x;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    h = ad::affine(h, tape.bind(layers[k].weight, trainable), tape.bind(layers[k].bias, trainable));
    if (k + 1 < layers.size()) h = ad::relu(h);
  }
  return h;
}

NetDims net_dims(const DynamicsModel& model, double scale) {
  require(scale > 0 && scale <= 1, "width scale must lie in (0, 1]");
  NetDims d;
  d.edge_in = model.edge_dim() + 1;
  d.embed_hidden = scaled(2048, scale);
  d.embed_out = scaled(256, scale);
  d.gate_hidden = scaled(128, scale);
  d.value_hidden = scaled(2048, scale);
  d.value_out = scaled(1024, scale);
  d.head_hidden = {scaled(512, scale), scaled(128, scale), scaled(32, scale)};
  d.control_dim = model.control_dim;
  return d;
}

std::vector<const ad::Parameter*> Networks::gcbf_parameters() const {
  std::vector<const ad::Parameter*> out;
  collect_net(gcbf, out);
  return out;
}

std::vector<const ad::Parameter*> Networks::policy_parameters() const {
  std::vector<const ad::Parameter*> out;
  collect_net(policy, out);
  return out;
}

std::vector<ad::Parameter*> Networks::gcbf_parameters() {
  std::vector<ad::Parameter*> out;
  collect_net(gcbf, out);
  return out;
}

std::vector<ad::Parameter*> Networks::policy_parameters() {
  std::vector<ad::Parameter*> out;
  collect_net(policy, out);
  return out;
}

Networks init_networks(const DynamicsModel& model, std::uint64_t seed, double scale) {
  const NetDims d = net_dims(model, scale);
  std::mt19937_64 rng(seed);
  Networks nets;
  nets.model = model.kind;
  nets.scale = scale;
  nets.gcbf.backbone = make_backbone("gcbf", d, rng);
  nets.gcbf.head = make_mlp("gcbf.head", d.value_out, d.head_hidden, 1, rng, false);
  nets.policy.backbone = make_backbone("policy", d, rng);
  nets.policy.head = make_mlp("policy.head", d.value_out + d.control_dim, d.head_hidden,
                              d.control_dim, rng, true);
  return nets;
}

ad::Var node_embedding(const DynamicsModel& model, const ad::Var& states) {
  if (model.kind != ModelKind::DubinsCar) return states;
  const ad::Var px = ad::slice_cols(states, 0, 1);
  const ad::Var py = ad::slice_cols(states, 1, 1);
  const ad::Var theta = ad::slice_cols(states, 2, 1);
  const ad::Var v = ad::slice_cols(states, 3, 1);
  return ad::concat_cols(
      {px, py, ad::mul(v, ad::cos(theta)), ad::mul(v, ad::sin(theta)), theta});
}

EdgeBatch make_edge_batch(const DynamicsModel& model, const GraphSnapshot& graph,
                          const ad::Var& node_states) {
  require(node_states.rows() == graph.n_nodes() && node_states.cols() == model.state_dim,
          "node state stack does not match the graph");
  ad::Tape& tape = *node_states.tape();
  EdgeBatch batch;
  batch.n_agents = graph.n_agents;
  const int E = static_cast<int>(graph.edges.size());
  if (E == 0) {
    batch.inputs = tape.constant(Mat(0, model.edge_dim() + 1));
    return batch;
  }
  std::vector<int> src(E);
  batch.dst.resize(E);
  Mat flags(E, 1);
  for (int e = 0; e < E; ++e) {
    src[e] = graph.edges[e].src;
    batch.dst[e] = graph.edges[e].dst;
    flags(e, 0) = graph.edges[e].type_flag;
  }
  const ad::Var emb = node_embedding(model, node_states);
  const ad::Var feat = ad::sub(ad::gather_rows(emb, src), ad::gather_rows(emb, batch.dst));
  batch.inputs = ad::concat_cols({tape.constant(std::move(flags)), feat});
  return batch;
}

EdgeBatch make_edge_batch(ad::Tape& tape, const DynamicsModel& model, const GraphSnapshot& graph) {
  EdgeBatch batch;
  batch.n_agents = graph.n_agents;
  std::vector<int> all(graph.edges.size());
  for (std::size_t e = 0; e < all.size(); ++e) {
    all[e] = static_cast<int>(e);
    batch.dst.push_back(graph.edges[e].dst);
  }
  batch.inputs = constant_edges(tape, graph, all, model.edge_dim());
  return batch;
}

BackboneOut backbone_forward(ad::Tape& tape, const GnnBackbone& net, const EdgeBatch& batch,
                             bool trainable) {
  const ad::Var q = net.embed.forward(tape, batch.inputs, trainable);
  const ad::Var logits = net.gate.forward(tape, q, trainable);
  BackboneOut out;
  out.attention = ad::segment_softmax(logits, batch.dst, batch.n_agents);
  const ad::Var msg = net.value.forward(tape, q, trainable);
  out.aggregated = ad::segment_sum(ad::mul_col(msg, out.attention), batch.dst, batch.n_agents);
  return out;
}

ad::Var gcbf_values(ad::Tape& tape, const GcbfNetParams& net, const EdgeBatch& batch,
                    bool trainable, ad::Var* attention) {
  const BackboneOut b = backbone_forward(tape, net.backbone, batch, trainable);
  if (attention) *attention = b.attention;
  return net.head.forward(tape, b.aggregated, trainable);
}

PolicyOut policy_controls(ad::Tape& tape, const PolicyNetParams& net, const DynamicsModel& model,
                          const EdgeBatch& batch, const ad::Var& u_nom, bool trainable) {
  require(u_nom.rows() == batch.n_agents && u_nom.cols() == model.control_dim,
          "u_nom must be n_agents x control_dim");
  const BackboneOut b = backbone_forward(tape, net.backbone, batch, trainable);
  PolicyOut out;
  out.deviation = net.head.forward(tape, ad::concat_cols({b.aggregated, u_nom}), trainable);
  out.control = ad::clamp(ad::add(u_nom, out.deviation), model.control_lo, model.control_hi);
  return out;
}

ad::Var virtual_step(ad::Tape& tape, const DynamicsModel& model, const Mat& states,
                     const ad::Var& controls, double dt) {
  require(states.cols() == model.state_dim, "state width mismatch");
  require(controls.rows() == states.rows() && controls.cols() == model.control_dim,
          "controls must be n x control_dim");
  Mat base = states;
  for (Eigen::Index i = 0; i < states.rows(); ++i) {
    const Vec x = states.row(i).transpose();
    base.row(i) += dt * drift(model, x).transpose();
  }
  const Mat gain = dt * input_matrix(model).transpose();  // control_dim x state_dim
  const ad::Var clamped = ad::clamp(controls, model.control_lo, model.control_hi);
  const ad::Var next =
      ad::add(tape.constant(std::move(base)), ad::matmul(clamped, tape.constant(gain)));

  const int sb = model.speed_begin;
  const int sc = model.speed_count;
  const int tail = model.state_dim - sb - sc;
  std::vector<ad::Var> parts;
  if (sb > 0) parts.push_back(ad::slice_cols(next, 0, sb));
  parts.push_back(ad::clamp_row_norm(ad::slice_cols(next, sb, sc), model.speed_bound));
  if (tail > 0) parts.push_back(ad::slice_cols(next, sb + sc, tail));
  return ad::concat_cols(parts);
}

ad::Var with_agent_states(ad::Tape& tape, const GraphSnapshot& graph, const ad::Var& agent_states) {
  require(agent_states.rows() == graph.n_agents, "one state row per agent expected");
  const int hits = graph.n_nodes() - graph.n_agents;
  if (hits == 0) return agent_states;
  return ad::concat_rows({agent_states, tape.constant(graph.node_states.bottomRows(hits))});
}

GcbfEval gcbf_forward(const GcbfNetParams& net, const DynamicsModel& model,
                      const GraphSnapshot& graph, int agent) {
  require(agent >= 0 && agent < graph.n_agents, "agent index out of range");
  const std::vector<int> edges = graph.in_edges(agent);
  ad::Tape tape;
  EdgeBatch batch;
  batch.n_agents = 1;
  batch.dst.assign(edges.size(), 0);
  batch.inputs = constant_edges(tape, graph, edges, model.edge_dim());
  ad::Var attention;
  const ad::Var h = gcbf_values(tape, net, batch, false, &attention);
  GcbfEval out;
  out.h = h.scalar();
  const Mat& a = attention.value();
  out.attention.assign(a.data(), a.data() + a.size());
  return out;
}

Vec policy_forward(const PolicyNetParams& net, const DynamicsModel& model,
                   const GraphSnapshot& graph, int agent, const Vec& u_nom) {
  require(agent >= 0 && agent < graph.n_agents, "agent index out of range");
  require(u_nom.size() == model.control_dim, "u_nom dimension mismatch");
  const std::vector<int> edges = graph.in_edges(agent);
  ad::Tape tape;
  EdgeBatch batch;
  batch.n_agents = 1;
  batch.dst.assign(edges.size(), 0);
  batch.inputs = constant_edges(tape, graph, edges, model.edge_dim());
  const ad::Var un = tape.constant(u_nom.transpose());
  const PolicyOut out = policy_controls(tape, net, model, batch, un, false);
  return out.control.value().row(0).transpose();
}

Mat nominal_controls(const DynamicsModel& model, const GraphSnapshot& graph) {
  Mat u(graph.n_agents, model.control_dim);
  for (int i = 0; i < graph.n_agents; ++i)
    u.row(i) = nominal_control(model, graph.agents[i].x, graph.agents[i].goal).transpose();
  return u;
}

void save_checkpoint(const Networks& nets, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("checkpoint: cannot write '" + path + "'");
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kVersion);
  put_string(os, to_string(nets.model));
  put<double>(os, nets.scale);
  put<std::uint64_t>(os, nets.step);
  auto params = nets.gcbf_parameters();
  const auto policy = nets.policy_parameters();
  params.insert(params.end(), policy.begin(), policy.end());
  put<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (const ad::Parameter* p : params) {
    put_string(os, p->name);
    put<std::uint32_t>(os, 2);
    put<std::uint64_t>(os, static_cast<std::uint64_t>(p->value.rows()));
    put<std::uint64_t>(os, static_cast<std::uint64_t>(p->value.cols()));
    for (Eigen::Index k = 0; k < p->value.size(); ++k) put<double>(os, p->value.data()[k]);
  }
  if (!os) throw ConfigError("checkpoint: write failed for '" + path + "'");
}

Networks load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("checkpoint: cannot open '" + path + "'");
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ConfigError("checkpoint: bad magic in '" + path + "'");
  if (get<std::uint32_t>(is) != kVersion) throw ConfigError("checkpoint: unsupported version");
  const ModelKind kind = parse_model_kind(get_string(is));
  const double scale = get<double>(is);
  const auto step = get<std::uint64_t>(is);
  Networks nets = init_networks(make_model(kind), 0, scale);
  nets.step = step;
  auto params = nets.gcbf_parameters();
  const auto policy = nets.policy_parameters();
  params.insert(params.end(), policy.begin(), policy.end());
  const auto n = get<std::uint32_t>(is);
  if (n != params.size()) throw ConfigError("checkpoint: slot count does not match the model");
  for (ad::Parameter* p : params) {
    const std::string name = get_string(is);
    if (name != p->name) throw ConfigError("checkpoint: expected slot '" + p->name + "', got '" + name + "'");
    if (get<std::uint32_t>(is) != 2) throw ConfigError("checkpoint: slot '" + name + "' is not rank 2");
    const auto rows = get<std::uint64_t>(is);
    const auto cols = get<std::uint64_t>(is);
    if (rows != static_cast<std::uint64_t>(p->value.rows()) ||
        cols != static_cast<std::uint64_t>(p->value.cols()))
      throw ConfigError("checkpoint: shape mismatch in slot '" + name + "'");
    for (Eigen::Index k = 0; k < p->value.size(); ++k) p->value.data()[k] = get<double>(is);
    p->zero_grad();
  }
  return nets;
}

}  // namespace gcbf
