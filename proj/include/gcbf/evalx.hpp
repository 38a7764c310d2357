// Copyright 2026 The gcbf-swarm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gcbf/nets.hpp"
#include "gcbf/safectl.hpp"
#include "gcbf/world.hpp"

namespace gcbf {

enum class ControllerKind { Nominal, Gcbf, Learned, QpCentral, QpDecentral };
std::string to_string(ControllerKind kind);
ControllerKind parse_controller(const std::string& name);
bool needs_networks(ControllerKind kind);

struct MetricsRecord {
  double safety_rate = 0.0;
  double reaching_rate = 0.0;
  double success_rate = 0.0;
  std::vector<bool> safe;
  std::vector<bool> reached;
  std::vector<bool> success;
  int n_agents = 0;
  Suite suite = Suite::KeepDensity;
  std::uint64_t seed = 0;
  std::uint64_t policy_seed = 0;
  ControllerKind controller = ControllerKind::Nominal;
  int steps = 0;
  double wall_time_s = 0.0;
  /// Controller time per step; per agent for the decentralized QP.
  double mean_step_time_s = 0.0;
  int fallback_steps = 0;  // agent-steps where a QP filter fell back to nominal
};

/// Collision flags for every recorded state (index 0 is the initial state)
/// plus the positions at termination.
struct RunTrace {
  std::vector<std::vector<bool>> collided;
  std::vector<Vec> final_positions;
  std::vector<Vec> goals;
};

/// Safe: never flagged. Reaching: within goal_tol of the goal at termination.
MetricsRecord score_run(const RunTrace& trace, double goal_tol);

struct TrajectoryRecord {
  int t = 0;
  int agent_id = 0;
  Vec state;
  Vec control;
  std::string mode;
  std::optional<double> h_value;
  bool collision = false;
  std::vector<Vec> lidar;  // valid LiDAR hit points in world coordinates
};

struct EpisodeOptions {
  ControllerKind controller = ControllerKind::Nominal;
  RefineConfig refine;
  double alpha = 1.0;
  double goal_tol = 0.05;
  /// Stop once every agent is within goal_tol of its goal.
  bool stop_when_reached = true;
};

struct EpisodeResult {
  MetricsRecord metrics;
  RunTrace trace;
};

/// Runs one closed-loop episode. `nets` is required for the learned
/// controllers. `sink` receives one record per agent per step.
EpisodeResult run_episode(const ScenarioConfig& scenario, const EpisodeOptions& options,
                          const Networks* nets,
                          const std::function<void(const TrajectoryRecord&)>& sink = {});

struct SuiteOptions {
  Suite suite = Suite::KeepDensity;
  ModelKind model = ModelKind::SimpleCar;
  std::vector<int> n_agents = {4, 8, 16, 32};
  int instances = 16;
  std::uint64_t base_seed = 0;
  /// Optional overrides of the suite defaults.
  std::optional<int> horizon;
  std::optional<double> sensing_radius;
  EpisodeOptions episode;
  int workers = 1;
};

/// One scenario config per (N, instance); deterministic in base_seed.
ScenarioConfig suite_scenario(const SuiteOptions& options, int n_agents, int instance);

/// Every (N, instance, policy) combination; `policies` may be empty for
/// controllers without networks. Records are ordered by N, policy, instance.
std::vector<MetricsRecord> run_suite(const SuiteOptions& options,
                                     const std::vector<Networks>& policies);

struct AggregateRow {
  Suite suite = Suite::KeepDensity;
  ControllerKind controller = ControllerKind::Nominal;
  int n_agents = 0;
  int runs = 0;
  double safety_mean = 0.0, safety_std = 0.0;
  double reaching_mean = 0.0, reaching_std = 0.0;
  double success_mean = 0.0, success_std = 0.0;
};

/// Mean and population standard deviation per (suite, controller, N).
std::vector<AggregateRow> aggregate(const std::vector<MetricsRecord>& records);

enum class SweepKind { SensingRadius, RefineIters, RefineLr, Alpha };
std::string to_string(SweepKind kind);
SweepKind parse_sweep_kind(const std::string& name);
/// The default grid for each sweep.
std::vector<double> default_sweep_values(SweepKind kind);

struct SweepRow {
  SweepKind kind = SweepKind::Alpha;
  double value = 0.0;
  AggregateRow result;
};

/// One suite run per value. For the alpha sweep `train_for_alpha` supplies a
/// policy trained at that alpha; the other sweeps reuse `policies`.
std::vector<SweepRow> ablation_sweep(
    SweepKind kind, const std::vector<double>& values, const SuiteOptions& options,
    const std::vector<Networks>& policies,
    const std::function<Networks(double alpha)>& train_for_alpha = {});

struct QpBenchRow {
  int n_agents = 0;
  ControllerKind mode = ControllerKind::QpCentral;
  double mean_step_time_s = 0.0;
  double safety_rate = 0.0;
};

/// Closed-loop handcrafted-CBF runs on the increase_density workspace.
std::vector<QpBenchRow> qp_benchmark(const std::vector<int>& n_agents, int instances,
                                     std::uint64_t base_seed, std::optional<int> horizon,
                                     int workers);

// CSV exports.
std::string results_csv_header();
std::string results_csv_line(const MetricsRecord& r);
std::string plot_csv_header();
std::string plot_csv_line(const AggregateRow& r);
std::string sweep_csv_header();
std::string sweep_csv_line(const SweepRow& r);
std::string qp_bench_csv_header();
std::string qp_bench_csv_line(const QpBenchRow& r);

}  // namespace gcbf
