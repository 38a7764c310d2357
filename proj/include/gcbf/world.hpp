// Copyright 2026 The gcbf-swarm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gcbf/common.hpp"
#include "gcbf/dynamics.hpp"

namespace gcbf {

struct AgentState {
  Vec x;
  Vec goal;
  int id = 0;
};

enum class ShapeKind { Circle, Box };

/// Moving obstacle. Circle means a disk in 2D and a ball in 3D; Box is
/// axis-aligned with full side lengths `size`.
struct Obstacle {
  ShapeKind shape = ShapeKind::Circle;
  double radius = 0.0;
  Vec size;
  Vec center;
  Vec velocity;

  /// Signed distance from p to the obstacle surface (negative inside).
  double signed_distance(const Vec& p) const;
  /// Smallest t >= 0 with origin + t * dir on the boundary, if any.
  std::optional<double> ray_hit(const Vec& origin, const Vec& dir) const;
};

Obstacle make_circle(const Vec& center, double radius, const Vec& velocity);
Obstacle make_box(const Vec& center, const Vec& size, const Vec& velocity);

struct LidarHit {
  Vec rel;  // hit point relative to the agent
  bool valid = false;
};

struct LidarScan {
  std::vector<LidarHit> hits;
  int n_rays() const { return static_cast<int>(hits.size()); }
};

/// Unit ray directions: evenly spaced angles in 2D, a Fibonacci sphere in 3D.
std::vector<Vec> ray_directions(int space_dim, int n_rays);

/// Nearest boundary intersection within R along each ray. An agent that sits
/// inside an obstacle gets a hit at its own position on every ray.
LidarScan raycast(const Vec& position, std::span<const Obstacle> obstacles, int n_rays, double R);

struct Edge {
  int dst = 0;  // receiving agent
  int src = 0;  // node index; < n_agents for agents, otherwise a LiDAR hit
  Vec feature;  // e_ij
  double type_flag = 0.0;  // 0 for agents, 1 for LiDAR hits
  double distance = 0.0;
};

/// Sensing graph at one timestep. Node rows 0..n_agents-1 are agents, the
/// remaining rows are LiDAR hits stored as virtual states at rest.
struct GraphSnapshot {
  ModelKind model = ModelKind::SimpleCar;
  int n_agents = 0;
  double sensing_radius = 1.0;
  std::vector<AgentState> agents;
  Mat node_states;
  std::vector<int> hit_owner;  // per LiDAR node, the agent that observed it
  std::vector<Edge> edges;

  int n_nodes() const { return static_cast<int>(node_states.rows()); }
  bool is_agent(int node) const { return node < n_agents; }
  std::vector<int> in_edges(int agent) const;
};

GraphSnapshot build_graph(const DynamicsModel& model, std::span<const AgentState> agents,
                          std::span<const LidarScan> scans, double R);

enum class SafetyLabel { Unsafe, Safe, Buffer };
std::string to_string(SafetyLabel label);

/// 2r/4r labeling from the agent's in-edges: agent distances and LiDAR ranges.
SafetyLabel label_sample(const GraphSnapshot& graph, int agent, double r);

enum class Suite { IncreaseDensity, KeepDensity, KeepDistance, Obstacles, Crossing };
std::string to_string(Suite suite);
Suite parse_suite(const std::string& name);

struct ScenarioConfig {
  ModelKind model = ModelKind::SimpleCar;
  int n_agents = 16;
  double side_length = 8.0;
  double r = 0.05;
  double sensing_radius = 1.0;
  double dt = 0.03;
  int horizon = 2500;
  std::uint64_t seed = 0;
  Suite suite = Suite::KeepDensity;
  /// Explicit obstacles; when absent the obstacles suite samples n_obstacles of them.
  std::optional<std::vector<Obstacle>> obstacles;
  int n_obstacles = 0;
  int n_rays = 32;
};

/// Workspace side length for a suite (fixed for increase_density, the
/// constant-density table otherwise).
double workspace_side(Suite suite, int space_dim, int n_agents);

/// Suite defaults: workspace size, R, horizon, obstacle count.
ScenarioConfig default_scenario(ModelKind model, int n_agents, Suite suite, std::uint64_t seed);

struct Scenario {
  std::vector<AgentState> agents;
  std::vector<Obstacle> obstacles;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rejection-sampled starts and goals, deterministic in config.seed.
Scenario generate_scenario(const ScenarioConfig& config);

struct WorldStep {
  std::vector<AgentState> agents;
  std::vector<Obstacle> obstacles;
  std::vector<bool> collided;
  bool all_reached = false;
};

WorldStep step_world(const DynamicsModel& model, std::span<const AgentState> agents,
                     std::span<const Vec> controls, std::span<const Obstacle> obstacles, double dt,
                     double r);

/// Per-agent collision flags: another agent within 2r or an obstacle within r.
std::vector<bool> collision_flags(const DynamicsModel& model, std::span<const AgentState> agents,
                                  std::span<const Obstacle> obstacles, double r);

bool reached_goal(const DynamicsModel& model, const AgentState& agent, double tol);

/// LiDAR scans for every agent against the current obstacles.
std::vector<LidarScan> scan_all(const DynamicsModel& model, std::span<const AgentState> agents,
                                std::span<const Obstacle> obstacles, int n_rays, double R);

/// Scans (skipped when there are no obstacles) followed by build_graph.
GraphSnapshot observe(const DynamicsModel& model, std::span<const AgentState> agents,
                      std::span<const Obstacle> obstacles, int n_rays, double R);

/// Scenario file I/O (JSON). Unknown keys are rejected with ConfigError.
ScenarioConfig load_scenario_file(const std::string& path);
ScenarioConfig scenario_from_json_text(const std::string& text);
std::string scenario_to_json_text(const ScenarioConfig& config);

}  // namespace gcbf
