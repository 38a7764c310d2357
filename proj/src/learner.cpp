// Copyright 2026 The gcbf-swarm Authors
// SPDX-License-Identifier: Apache-2.0

#include "gcbf/learner.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace gcbf {

namespace {

// Disjoint union of per-step graphs: all agents first, then all LiDAR nodes,
// so that with_agent_states() and the edge batch work on the stacked batch.
GraphSnapshot stack_graphs(std::span<const TrainSample> batch) {
  GraphSnapshot g;
  g.model = batch.front().graph.model;
  g.sensing_radius = batch.front().graph.sensing_radius;
  int n_agents = 0;
  int n_hits = 0;
  for (const auto& s : batch) {
    n_agents += s.graph.n_agents;
    n_hits += s.graph.n_nodes() - s.graph.n_agents;
  }
  g.n_agents = n_agents;
  const int dim = static_cast<int>(batch.front().graph.node_states.cols());
  g.node_states.resize(n_agents + n_hits, dim);
  int agent_base = 0;
  int hit_base = n_agents;
  for (const auto& s : batch) {
    const GraphSnapshot& sg = s.graph;
    const int hits = sg.n_nodes() - sg.n_agents;
    g.node_states.middleRows(agent_base, sg.n_agents) = sg.node_states.topRows(sg.n_agents);
    if (hits > 0) g.node_states.middleRows(hit_base, hits) = sg.node_states.bottomRows(hits);
    g.agents.insert(g.agents.end(), sg.agents.begin(), sg.agents.end());
    for (int owner : sg.hit_owner) g.hit_owner.push_back(owner + agent_base);
    for (Edge e : sg.edges) {
      e.src = sg.is_agent(e.src) ? e.src + agent_base : e.src - sg.n_agents + hit_base;
      e.dst += agent_base;
      g.edges.push_back(std::move(e));
    }
    agent_base += sg.n_agents;
    hit_base += hits;
  }
  return g;
}

Mat stack_rows(std::span<const TrainSample> batch, Mat TrainSample::*field) {
  Eigen::Index rows = 0;
  for (const auto& s : batch) rows += (s.*field).rows();
  Mat out(rows, (batch.front().*field).cols());
  Eigen::Index at = 0;
  for (const auto& s : batch) {
    out.middleRows(at, (s.*field).rows()) = s.*field;
    at += (s.*field).rows();
  }
  return out;
}

struct BatchForward {
  ad::Var h;
  ad::Var hdot;
  ad::Var deviation;
  std::vector<SafetyLabel> labels;
};

BatchForward forward_batch(ad::Tape& tape, const Networks& nets, const DynamicsModel& model,
                           std::span<const TrainSample> batch, double dt, bool trainable) {
  require(!batch.empty(), "loss needs a nonempty batch");
  const GraphSnapshot g = stack_graphs(batch);
  BatchForward out;
  for (const auto& s : batch) {
    require(static_cast<int>(s.labels.size()) == s.graph.n_agents, "one label per agent expected");
    out.labels.insert(out.labels.end(), s.labels.begin(), s.labels.end());
  }
  const EdgeBatch now = make_edge_batch(tape, model, g);
  out.h = gcbf_values(tape, nets.gcbf, now, trainable);
  const ad::Var u_nom = tape.constant(stack_rows(batch, &TrainSample::u_nom));
  const PolicyOut pol = policy_controls(tape, nets.policy, model, now, u_nom, trainable);
  out.deviation = pol.deviation;
  const ad::Var next =
      virtual_step(tape, model, g.node_states.topRows(g.n_agents), pol.control, dt);
  const EdgeBatch later = make_edge_batch(model, g, with_agent_states(tape, g, next));
  const ad::Var h_next = gcbf_values(tape, nets.gcbf, later, trainable);
  out.hdot = ad::scale(ad::sub(h_next, out.h), 1.0 / dt);
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::app);
  if (!os) throw ConfigError("cannot write '" + path.string() + "'");
  os << text;
}

}  // namespace

TrainConfig default_train_config(ModelKind model) {
  TrainConfig c;
  c.model = model;
  const DynamicsModel m = make_model(model);
  c.sensing_radius = m.space_dim == 2 ? 1.0 : 0.5;
  if (model == ModelKind::DubinsCar) {
    c.eta_deriv = 0.2;
    c.eta_ctrl = 0.0001;
  }
  return c;
}

void validate(const TrainConfig& c) {
  auto positive = [](double v, const char* name) {
    if (!(v > 0)) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(c.alpha, "alpha");
  positive(c.gamma, "gamma");
  positive(c.lr_h, "lr_h");
  positive(c.lr_pi, "lr_pi");
  positive(c.dt, "dt");
  positive(c.r, "r");
  positive(c.sensing_radius, "sensing_radius");
  if (c.eta_safe < 0 || c.eta_unsafe < 0 || c.eta_deriv < 0 || c.eta_ctrl < 0)
    throw ConfigError("loss weights must be non-negative");
  if (!(c.scale > 0 && c.scale <= 1)) throw ConfigError("scale must lie in (0, 1]");
  if (c.total_steps < 0) throw ConfigError("total_steps must be non-negative");
  if (c.segment_length < 1) throw ConfigError("segment_length must be at least 1");
  if (c.rollout_length < 1) throw ConfigError("rollout_length must be at least 1");
  if (c.n_agents < 1) throw ConfigError("n_agents must be at least 1");
  if (c.crossing_fraction < 0 || c.crossing_fraction > 1)
    throw ConfigError("crossing_fraction must lie in [0, 1]");
  if (c.n_obstacles < 0 || c.n_rays < 1) throw ConfigError("bad obstacle or ray count");
  if (c.checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
}

RolloutState start_rollout(const ScenarioConfig& scenario) {
  RolloutState s;
  s.scenario = scenario;
  Scenario sc = generate_scenario(scenario);
  s.agents = std::move(sc.agents);
  s.obstacles = std::move(sc.obstacles);
  return s;
}

ScenarioConfig sample_training_scenario(const TrainConfig& config, std::mt19937_64& rng) {
  const bool crossing = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < config.crossing_fraction;
  const Suite suite =
      crossing ? Suite::Crossing : (config.n_obstacles > 0 ? Suite::Obstacles : Suite::KeepDensity);
  ScenarioConfig c = default_scenario(config.model, config.n_agents, suite, rng());
  c.r = config.r;
  c.sensing_radius = config.sensing_radius;
  c.dt = config.dt;
  c.n_rays = config.n_rays;
  c.n_obstacles = suite == Suite::Obstacles ? config.n_obstacles : 0;
  return c;
}

std::vector<TrainSample> collect_rollout(const Networks& nets, const DynamicsModel& model,
                                         RolloutState& state, double epsilon, int length,
                                         std::mt19937_64& rng) {
  require(epsilon >= 0 && epsilon <= 1, "epsilon must lie in [0, 1]");
  require(length >= 0, "rollout length must be non-negative");
  const ScenarioConfig& sc = state.scenario;
  std::vector<TrainSample> out;
  out.reserve(length);
  GraphSnapshot graph = observe(model, state.agents, state.obstacles, sc.n_rays, sc.sensing_radius);
  std::bernoulli_distribution coin(epsilon);
  for (int k = 0; k < length; ++k) {
    TrainSample s;
    s.u_nom = nominal_controls(model, graph);
    s.nominal_step = coin(rng);
    if (s.nominal_step) {
      s.applied = s.u_nom;
    } else {
      ad::Tape tape;
      const EdgeBatch batch = make_edge_batch(tape, model, graph);
      s.applied = policy_controls(tape, nets.policy, model, batch, tape.constant(s.u_nom), false)
                      .control.value();
    }
    std::vector<Vec> controls(graph.n_agents);
    for (int i = 0; i < graph.n_agents; ++i) controls[i] = s.applied.row(i).transpose();
    WorldStep w = step_world(model, state.agents, controls, state.obstacles, sc.dt, sc.r);
    s.labels.resize(graph.n_agents);
    for (int i = 0; i < graph.n_agents; ++i) s.labels[i] = label_sample(graph, i, sc.r);
    s.next_graph = observe(model, w.agents, w.obstacles, sc.n_rays, sc.sensing_radius);
    s.graph = std::move(graph);
    graph = s.next_graph;
    state.agents = std::move(w.agents);
    state.obstacles = std::move(w.obstacles);
    ++state.t;
    out.push_back(std::move(s));
  }
  return out;
}

double epsilon_at(int step, int total_steps) {
  if (total_steps <= 0) return 0.0;
  return std::clamp(1.0 - static_cast<double>(step) / total_steps, 0.0, 1.0);
}

double hdot_estimate(double h_now, double h_next, double dt) {
  require(dt > 0, "dt must be positive");
  return (h_next - h_now) / dt;
}

double hdot_estimate(const std::function<double(const GraphSnapshot&, int)>& h,
                     const TrainSample& sample, int agent, double dt) {
  return hdot_estimate(h(sample.graph, agent), h(sample.next_graph, agent), dt);
}

double hdot_estimate(const GcbfNetParams& net, const DynamicsModel& model,
                     const TrainSample& sample, int agent, double dt) {
  return hdot_estimate(
      [&](const GraphSnapshot& g, int i) { return gcbf_forward(net, model, g, i).h; }, sample,
      agent, dt);
}

LossOut compute_loss(ad::Tape& tape, const Networks& nets, const DynamicsModel& model,
                     std::span<const TrainSample> batch, const TrainConfig& config,
                     bool trainable) {
  const BatchForward f = forward_batch(tape, nets, model, batch, config.dt, trainable);
  const Eigen::Index n = static_cast<Eigen::Index>(f.labels.size());
  LossOut out;
  out.h = f.h;
  out.hdot = f.hdot;
  LossTerms& t = out.terms;
  for (SafetyLabel l : f.labels) {
    t.n_safe += l == SafetyLabel::Safe;
    t.n_unsafe += l == SafetyLabel::Unsafe;
    t.n_buffer += l == SafetyLabel::Buffer;
  }
  // Each hinge is averaged over the samples it applies to.
  Mat w_safe = Mat::Zero(n, 1), w_unsafe = Mat::Zero(n, 1), w_deriv = Mat::Zero(n, 1);
  const int n_deriv = t.n_safe + t.n_buffer;
  for (Eigen::Index k = 0; k < n; ++k) {
    const SafetyLabel l = f.labels[k];
    if (l == SafetyLabel::Safe) w_safe(k, 0) = config.eta_safe / t.n_safe;
    if (l == SafetyLabel::Unsafe) w_unsafe(k, 0) = config.eta_unsafe / t.n_unsafe;
    if (l != SafetyLabel::Unsafe) w_deriv(k, 0) = config.eta_deriv / n_deriv;
  }
  const ad::Var safe_hinge = ad::hinge(ad::add_scalar(ad::scale(f.h, -1.0), config.gamma));
  const ad::Var unsafe_hinge = ad::hinge(ad::add_scalar(f.h, config.gamma));
  const ad::Var residue = ad::add_scalar(
      ad::scale(ad::add(f.hdot, ad::scale(f.h, config.alpha)), -1.0), config.gamma);
  const ad::Var deriv_hinge = ad::hinge(residue);

  const ad::Var l_safe = ad::sum(ad::mul(safe_hinge, tape.constant(std::move(w_safe))));
  const ad::Var l_unsafe = ad::sum(ad::mul(unsafe_hinge, tape.constant(std::move(w_unsafe))));
  const ad::Var l_deriv = ad::sum(ad::mul(deriv_hinge, tape.constant(std::move(w_deriv))));
  const ad::Var l_ctrl = ad::scale(ad::mean(ad::row_norm(f.deviation)), config.eta_ctrl);
  out.total = ad::add(ad::add(l_safe, l_unsafe), ad::add(l_deriv, l_ctrl));
  t.safe = l_safe.scalar();
  t.unsafe = l_unsafe.scalar();
  t.deriv = l_deriv.scalar();
  t.ctrl = l_ctrl.scalar();
  t.total = out.total.scalar();
  return out;
}

Adam::Adam(std::vector<ad::Parameter*> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto* p : params_) {
    m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    ad::Parameter& p = *params_[k];
    m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * p.grad;
    v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr_ * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + eps_);
  }
}

std::string train_log_header() {
  return "step,loss_total,loss_safe,loss_unsafe,loss_deriv,loss_ctrl,epsilon\n";
}

std::string train_log_line(const TrainLogRow& row) {
  std::ostringstream os;
  os << std::setprecision(10) << row.step << ',' << row.terms.total << ',' << row.terms.safe << ','
     << row.terms.unsafe << ',' << row.terms.deriv << ',' << row.terms.ctrl << ',' << row.epsilon
     << '\n';
  return os.str();
}

TrainResult train(const TrainConfig& config, const std::function<void(const TrainLogRow&)>& on_step) {
  validate(config);
  return train(config, init_networks(make_model(config.model), config.seed, config.scale), on_step);
}

TrainResult train(const TrainConfig& config, Networks nets,
                  const std::function<void(const TrainLogRow&)>& on_step) {
  validate(config);
  if (nets.model != config.model) throw ConfigError("network model does not match the config");
  const DynamicsModel model = make_model(config.model);
  namespace fs = std::filesystem;
  const bool files = !config.out_dir.empty();
  const fs::path dir(config.out_dir);
  if (files) {
    fs::create_directories(dir);
    std::ofstream(dir / "train_log.csv") << train_log_header();
  }

  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  Adam adam_h(nets.gcbf_parameters(), config.lr_h);
  Adam adam_pi(nets.policy_parameters(), config.lr_pi);
  RolloutState env = start_rollout(sample_training_scenario(config, rng));

  TrainResult result;
  for (int step = 0; step < config.total_steps; ++step) {
    const bool arrived = std::all_of(env.agents.begin(), env.agents.end(), [&](const AgentState& a) {
      return reached_goal(model, a, config.r);
    });
    if (env.t >= config.rollout_length || arrived)
      env = start_rollout(sample_training_scenario(config, rng));

    const double eps = epsilon_at(step, config.total_steps);
    const auto samples = collect_rollout(nets, model, env, eps, config.segment_length, rng);

    adam_h.zero_grad();
    adam_pi.zero_grad();
    ad::Tape tape;
    const LossOut loss = compute_loss(tape, nets, model, samples, config, true);
    if (!std::isfinite(loss.terms.total)) {
      std::ostringstream msg;
      msg << "non-finite loss at step " << step << " (safe " << loss.terms.safe << ", unsafe "
          << loss.terms.unsafe << ", deriv " << loss.terms.deriv << ", ctrl " << loss.terms.ctrl
          << ", samples safe/unsafe/buffer " << loss.terms.n_safe << '/' << loss.terms.n_unsafe
          << '/' << loss.terms.n_buffer << ")";
      if (files) {
        save_checkpoint(nets, (dir / "nan_dump.ckpt").string());
        msg << "; parameters dumped to " << (dir / "nan_dump.ckpt").string();
      }
      throw TrainingError(msg.str());
    }
    tape.backward(loss.total);
    adam_h.step();
    adam_pi.step();
    ++nets.step;

    TrainLogRow row{step, loss.terms, eps};
    result.log.push_back(row);
    if (files) write_file(dir / "train_log.csv", train_log_line(row));
    if (on_step) on_step(row);
    if (files && config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0)
      save_checkpoint(nets, (dir / ("step_" + std::to_string(nets.step) + ".ckpt")).string());
  }
  if (files) save_checkpoint(nets, (dir / "final.ckpt").string());
  result.nets = std::move(nets);
  return result;
}

CertificateStats certificate_stats(const Networks& nets, const DynamicsModel& model,
                                   std::span<const TrainSample> samples,
                                   const TrainConfig& config) {
  CertificateStats st;
  if (samples.empty()) return st;
  int safe_ok = 0, unsafe_ok = 0, violations = 0;
  // Chunks keep the tape small on long held-out sets.
  constexpr std::size_t kChunk = 32;
  for (std::size_t at = 0; at < samples.size(); at += kChunk) {
    const auto part = samples.subspan(at, std::min(kChunk, samples.size() - at));
    ad::Tape tape;
    const BatchForward f = forward_batch(tape, nets, model, part, config.dt, false);
    const Mat& h = f.h.value();
    const Mat& hdot = f.hdot.value();
    for (std::size_t k = 0; k < f.labels.size(); ++k) {
      const double hk = h(static_cast<Eigen::Index>(k), 0);
      switch (f.labels[k]) {
        case SafetyLabel::Safe:
          ++st.n_safe;
          safe_ok += hk > 0;
          break;
        case SafetyLabel::Unsafe:
          ++st.n_unsafe;
          unsafe_ok += hk < 0;
          break;
        case SafetyLabel::Buffer:
          break;
      }
      if (f.labels[k] != SafetyLabel::Unsafe) {
        ++st.n_deriv;
        violations += config.gamma - hdot(static_cast<Eigen::Index>(k), 0) - config.alpha * hk > 0;
      }
    }
  }
  st.safe_accuracy = st.n_safe ? static_cast<double>(safe_ok) / st.n_safe : 0.0;
  st.unsafe_accuracy = st.n_unsafe ? static_cast<double>(unsafe_ok) / st.n_unsafe : 0.0;
  st.balanced_accuracy = 0.5 * (st.safe_accuracy + st.unsafe_accuracy);
  st.deriv_violation = st.n_deriv ? static_cast<double>(violations) / st.n_deriv : 0.0;
  return st;
}

}  // namespace gcbf
