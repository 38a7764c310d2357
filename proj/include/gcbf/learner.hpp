// Copyright 2026 The gcbf-swarm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gcbf/nets.hpp"
#include "gcbf/world.hpp"

namespace gcbf {

struct TrainConfig {
  ModelKind model = ModelKind::SimpleCar;
  double scale = 0.125;
  double alpha = 1.0;
  double gamma = 0.02;
  double eta_safe = 1.0;
  double eta_unsafe = 1.0;
  double eta_deriv = 0.5;
  double eta_ctrl = 0.05;
  double lr_h = 3e-4;
  double lr_pi = 1e-3;
  int total_steps = 5000;
  /// Environment steps gathered per optimizer step; all agent samples in them form one batch.
  int segment_length = 16;
  /// The environment is resampled after this many steps (or once every agent has arrived).
  int rollout_length = 256;
  int n_agents = 16;
  /// Fraction of training scenarios drawn from the antipodal crossing layout.
  double crossing_fraction = 0.5;
  int n_obstacles = 0;
  int n_rays = 32;
  double r = 0.05;
  double sensing_radius = 1.0;
  double dt = 0.03;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::string out_dir;       // empty disables file output
};

/// Hyper-parameters for a model (coefficients differ for DubinsCar, R for 3D).
TrainConfig default_train_config(ModelKind model);
void validate(const TrainConfig& config);

struct TrainSample {
  GraphSnapshot graph;       // t_k
  GraphSnapshot next_graph;  // t_{k+1}
  std::vector<SafetyLabel> labels;
  Mat applied;  // n_agents x control_dim
  Mat u_nom;    // n_agents x control_dim at t_k
  bool nominal_step = false;
};

/// Live environment the rollouts advance.
struct RolloutState {
  ScenarioConfig scenario;
  std::vector<AgentState> agents;
  std::vector<Obstacle> obstacles;
  int t = 0;
};

RolloutState start_rollout(const ScenarioConfig& scenario);

/// Training scenario for the given draw: random placements or a crossing layout.
ScenarioConfig sample_training_scenario(const TrainConfig& config, std::mt19937_64& rng);

/// Advances `state` by `length` steps. Each step draws once: with probability
/// epsilon every agent applies u_nom, otherwise every agent applies pi_phi.
std::vector<TrainSample> collect_rollout(const Networks& nets, const DynamicsModel& model,
                                         RolloutState& state, double epsilon, int length,
                                         std::mt19937_64& rng);

/// Linear schedule from 1 at step 0 to 0 at total_steps.
double epsilon_at(int step, int total_steps);

/// (h_next - h_now) / dt.
double hdot_estimate(double h_now, double h_next, double dt);
/// Finite difference of an arbitrary certificate between the two recorded graphs.
double hdot_estimate(const std::function<double(const GraphSnapshot&, int)>& h,
                     const TrainSample& sample, int agent, double dt);
/// Finite difference of h_theta between the two recorded graphs.
double hdot_estimate(const GcbfNetParams& net, const DynamicsModel& model,
                     const TrainSample& sample, int agent, double dt);

struct LossTerms {
  double total = 0.0;
  double safe = 0.0;    // eta_safe * mean over safe samples of [gamma - h]+
  double unsafe = 0.0;  // eta_unsafe * mean over unsafe samples of [gamma + h]+
  double deriv = 0.0;   // eta_deriv * mean over safe and buffer samples of [gamma - hdot - alpha h]+
  double ctrl = 0.0;    // eta * mean over agents of ||pi_phi - u_nom||
  int n_safe = 0;
  int n_unsafe = 0;
  int n_buffer = 0;
};

struct LossOut {
  ad::Var total;
  LossTerms terms;
  ad::Var h;      // stacked h at t_k (samples x agents, row-major by sample)
  ad::Var hdot;   // stacked virtual-step hdot
};

/// Weighted hinge loss over every agent of every sample. hdot uses a virtual
/// step of pi_phi from t_k with the t_k edge set, so gradients reach the
/// policy of the agent and of each neighbor.
LossOut compute_loss(ad::Tape& tape, const Networks& nets, const DynamicsModel& model,
                     std::span<const TrainSample> batch, const TrainConfig& config,
                     bool trainable = true);

class Adam {
 public:
  Adam(std::vector<ad::Parameter*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step();
  void zero_grad();
  long long steps_taken() const { return t_; }

 private:
  std::vector<ad::Parameter*> params_;
  std::vector<Mat> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
};

struct TrainLogRow {
  int step = 0;
  LossTerms terms;
  double epsilon = 0.0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  Networks nets;
  std::vector<TrainLogRow> log;
};

/// Joint Adam training. Writes train_log.csv and checkpoints when out_dir is
/// set. Throws TrainingError on a non-finite loss after dumping the state.
TrainResult train(const TrainConfig& config,
                  const std::function<void(const TrainLogRow&)>& on_step = {});
/// Continues from existing networks (the step counter carries over).
TrainResult train(const TrainConfig& config, Networks nets,
                  const std::function<void(const TrainLogRow&)>& on_step = {});

std::string train_log_header();
std::string train_log_line(const TrainLogRow& row);

struct CertificateStats {
  int n_safe = 0;
  int n_unsafe = 0;
  int n_deriv = 0;
  double safe_accuracy = 0.0;    // fraction of safe samples with h > 0
  double unsafe_accuracy = 0.0;  // fraction of unsafe samples with h < 0
  double balanced_accuracy = 0.0;
  /// Fraction of safe and buffer samples with gamma - hdot - alpha h > 0.
  double deriv_violation = 0.0;
};

/// Scores h_theta on held-out samples with the same virtual-step hdot as training.
CertificateStats certificate_stats(const Networks& nets, const DynamicsModel& model,
                                   std::span<const TrainSample> samples,
                                   const TrainConfig& config);

}  // namespace gcbf
