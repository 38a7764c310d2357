// Copyright 2026 The gcbf-swarm Authors
// SPDX-License-Identifier: Apache-2.0

#include "gcbf/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "gcbf/spatial.hpp"
#include "json.hpp"

namespace gcbf {

namespace {

constexpr int kMaxRejections = 10000;

std::vector<Vec> agent_positions(const DynamicsModel& model, std::span<const AgentState> agents) {
  std::vector<Vec> out;
  out.reserve(agents.size());
  for (const auto& a : agents) out.push_back(position(model, a.x));
  return out;
}

Vec random_point(std::mt19937_64& rng, int dim, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Vec p(dim);
  for (int k = 0; k < dim; ++k) p(k) = dist(rng);
  return p;
}

Vec random_direction(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec d(dim);
  do {
    for (int k = 0; k < dim; ++k) d(k) = normal(rng);
  } while (d.norm() < 1e-12);
  return d.normalized();
}

bool clear_of(const Vec& p, const std::vector<Vec>& taken, double min_dist) {
  for (const auto& q : taken)
    if ((p - q).norm() < min_dist) return false;
  return true;
}

bool clear_of_obstacles(const Vec& p, const std::vector<Obstacle>& obstacles, double min_dist) {
  for (const auto& o : obstacles)
    if (o.signed_distance(p) < min_dist) return false;
  return true;
}

}  // namespace

double Obstacle::signed_distance(const Vec& p) const {
  if (shape == ShapeKind::Circle) return (p - center).norm() - radius;
  const Vec q = (p - center).cwiseAbs() - 0.5 * size;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

std::optional<double> Obstacle::ray_hit(const Vec& origin, const Vec& dir) const {
  if (shape == ShapeKind::Circle) {
    const Vec oc = origin - center;
    const double b = dir.dot(oc);
    const double c = oc.squaredNorm() - radius * radius;
    const double disc = b * b - c;
    if (disc < 0) return std::nullopt;
    const double root = std::sqrt(disc);
    const double t_near = -b - root;
    if (t_near >= 0) return t_near;
    const double t_far = -b + root;
    if (t_far >= 0) return t_far;
    return std::nullopt;
  }
  double t_enter = -std::numeric_limits<double>::infinity();
  double t_exit = std::numeric_limits<double>::infinity();
  for (int k = 0; k < origin.size(); ++k) {
    const double lo = center(k) - 0.5 * size(k);
    const double hi = center(k) + 0.5 * size(k);
    if (std::abs(dir(k)) < 1e-15) {
      if (origin(k) < lo || origin(k) > hi) return std::nullopt;
      continue;
    }
    double t1 = (lo - origin(k)) / dir(k);
    double t2 = (hi - origin(k)) / dir(k);
    if (t1 > t2) std::swap(t1, t2);
    t_enter = std::max(t_enter, t1);
    t_exit = std::min(t_exit, t2);
  }
  if (t_enter > t_exit || t_exit < 0) return std::nullopt;
  return t_enter >= 0 ? t_enter : t_exit;
}

Obstacle make_circle(const Vec& center, double radius, const Vec& velocity) {
  require(radius >= 0, "obstacle radius must be non-negative");
  Obstacle o;
  o.shape = ShapeKind::Circle;
  o.radius = radius;
  o.center = center;
  o.velocity = velocity;
  o.size = Vec::Constant(center.size(), 2.0 * radius);
  return o;
}

Obstacle make_box(const Vec& center, const Vec& size, const Vec& velocity) {
  require(size.size() == center.size() && (size.array() >= 0).all(), "bad box size");
  Obstacle o;
  o.shape = ShapeKind::Box;
  o.size = size;
  o.center = center;
  o.velocity = velocity;
  return o;
}

std::vector<Vec> ray_directions(int space_dim, int n_rays) {
  std::vector<Vec> dirs;
  dirs.reserve(n_rays);
  if (space_dim == 2) {
    for (int k = 0; k < n_rays; ++k) {
      const double a = 2.0 * std::numbers::pi * k / n_rays;
      Vec d(2);
      d << std::cos(a), std::sin(a);
      dirs.push_back(d);
    }
    return dirs;
  }
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int k = 0; k < n_rays; ++k) {
    const double z = n_rays == 1 ? 0.0 : 1.0 - 2.0 * (k + 0.5) / n_rays;
    const double ring = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double a = golden * k;
    Vec d(3);
    d << ring * std::cos(a), ring * std::sin(a), z;
    dirs.push_back(d.normalized());
  }
  return dirs;
}

LidarScan raycast(const Vec& position, std::span<const Obstacle> obstacles, int n_rays, double R) {
  require(R > 0, "sensing radius must be positive");
  LidarScan scan;
  scan.hits.resize(n_rays);
  const int dim = static_cast<int>(position.size());
  for (auto& h : scan.hits) h.rel = Vec::Zero(dim);

  bool inside = false;
  for (const auto& o : obstacles) inside = inside || o.signed_distance(position) <= 0.0;
  if (inside) {
    for (auto& h : scan.hits) h.valid = true;
    return scan;
  }

  const auto dirs = ray_directions(dim, n_rays);
  for (int k = 0; k < n_rays; ++k) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& o : obstacles) {
      if (o.signed_distance(position) > R) continue;
      if (auto t = o.ray_hit(position, dirs[k]); t && *t < best) best = *t;
    }
    if (best <= R) {
      scan.hits[k].rel = best * dirs[k];
      scan.hits[k].valid = true;
    }
  }
  return scan;
}

std::vector<int> GraphSnapshot::in_edges(int agent) const {
  std::vector<int> out;
  for (int e = 0; e < static_cast<int>(edges.size()); ++e)
    if (edges[e].dst == agent) out.push_back(e);
  return out;
}

GraphSnapshot build_graph(const DynamicsModel& model, std::span<const AgentState> agents,
                          std::span<const LidarScan> scans, double R) {
  require(R > 0, "sensing radius must be positive");
  require(scans.empty() || scans.size() == agents.size(), "one LiDAR scan per agent expected");
  GraphSnapshot g;
  g.model = model.kind;
  g.n_agents = static_cast<int>(agents.size());
  g.sensing_radius = R;
  g.agents.assign(agents.begin(), agents.end());

  int n_hits = 0;
  for (const auto& s : scans)
    for (const auto& h : s.hits) n_hits += h.valid ? 1 : 0;

  g.node_states.resize(g.n_agents + n_hits, model.state_dim);
  for (int i = 0; i < g.n_agents; ++i) {
    require(agents[i].x.size() == model.state_dim, "agent state dimension mismatch");
    g.node_states.row(i) = agents[i].x.transpose();
  }

  // LiDAR nodes grouped per owner so each agent's hits are contiguous.
  std::vector<std::vector<int>> hits_of(g.n_agents);
  int node = g.n_agents;
  for (int i = 0; i < static_cast<int>(scans.size()); ++i) {
    const Vec p = position(model, agents[i].x);
    for (const auto& h : scans[i].hits) {
      if (!h.valid) continue;
      g.node_states.row(node) = state_at_point(model, p + h.rel).transpose();
      g.hit_owner.push_back(i);
      hits_of[i].push_back(node);
      ++node;
    }
  }

  const auto positions = agent_positions(model, agents);
  const auto neighbors = neighbor_lists(positions, R);
  for (int i = 0; i < g.n_agents; ++i) {
    const Vec xi = agents[i].x;
    for (int j : neighbors[i]) {
      Edge e;
      e.dst = i;
      e.src = j;
      e.feature = edge_feature(model, xi, agents[j].x);
      e.type_flag = 0.0;
      e.distance = (positions[j] - positions[i]).norm();
      g.edges.push_back(std::move(e));
    }
    for (int n : hits_of[i]) {
      const Vec xn = g.node_states.row(n).transpose();
      Edge e;
      e.dst = i;
      e.src = n;
      e.feature = edge_feature(model, xi, xn);
      e.type_flag = 1.0;
      e.distance = (position(model, xn) - positions[i]).norm();
      g.edges.push_back(std::move(e));
    }
  }
  return g;
}

std::string to_string(SafetyLabel label) {
  switch (label) {
    case SafetyLabel::Unsafe: return "unsafe";
    case SafetyLabel::Safe: return "safe";
    case SafetyLabel::Buffer: return "buffer";
  }
  return "unknown";
}

SafetyLabel label_sample(const GraphSnapshot& graph, int agent, double r) {
  require(agent >= 0 && agent < graph.n_agents, "agent index out of range");
  double nearest_agent = std::numeric_limits<double>::infinity();
  double nearest_hit = std::numeric_limits<double>::infinity();
  for (const auto& e : graph.edges) {
    if (e.dst != agent) continue;
    if (graph.is_agent(e.src))
      nearest_agent = std::min(nearest_agent, e.distance);
    else
      nearest_hit = std::min(nearest_hit, e.distance);
  }
  if (nearest_agent < 2.0 * r || nearest_hit < r) return SafetyLabel::Unsafe;
  if (nearest_agent > 4.0 * r && nearest_hit > 4.0 * r) return SafetyLabel::Safe;
  return SafetyLabel::Buffer;
}

std::string to_string(Suite suite) {
  switch (suite) {
    case Suite::IncreaseDensity: return "increase_density";
    case Suite::KeepDensity: return "keep_density";
    case Suite::KeepDistance: return "keep_distance";
    case Suite::Obstacles: return "obstacles";
    case Suite::Crossing: return "crossing";
  }
  return "unknown";
}

Suite parse_suite(const std::string& name) {
  for (Suite s : {Suite::IncreaseDensity, Suite::KeepDensity, Suite::KeepDistance,
                  Suite::Obstacles, Suite::Crossing})
    if (to_string(s) == name) return s;
  throw ConfigError("unknown suite '" + name + "'");
}

double workspace_side(Suite suite, int space_dim, int n_agents) {
  require(space_dim == 2 || space_dim == 3, "space dimension must be 2 or 3");
  require(n_agents > 0, "need at least one agent");
  switch (suite) {
    case Suite::IncreaseDensity:
      return space_dim == 2 ? 32.0 : 16.0;
    case Suite::Obstacles:
      return 12.0;
    case Suite::Crossing:
      return 4.0;
    case Suite::KeepDensity:
    case Suite::KeepDistance:
      break;
  }
  static const std::map<int, double> side_2d = {{16, 8.0},   {32, 11.3},  {64, 16.0},
                                                {128, 22.6}, {256, 32.0}, {512, 45.3},
                                                {1024, 64.0}};
  static const std::map<int, double> side_3d = {
      {16, 6.35},  {32, 8.0},   {64, 10.1},   {128, 12.7},  {256, 16.0},
      {512, 20.2}, {1024, 25.4}, {2048, 32.0}, {4096, 40.3}};
  const auto& table = space_dim == 2 ? side_2d : side_3d;
  if (auto it = table.find(n_agents); it != table.end()) return it->second;
  const double base = space_dim == 2 ? 8.0 : 6.35;
  return base * std::pow(n_agents / 16.0, 1.0 / space_dim);
}

ScenarioConfig default_scenario(ModelKind model, int n_agents, Suite suite, std::uint64_t seed) {
  const DynamicsModel m = make_model(model);
  ScenarioConfig c;
  c.model = model;
  c.n_agents = n_agents;
  c.suite = suite;
  c.seed = seed;
  c.side_length = workspace_side(suite, m.space_dim, n_agents);
  c.sensing_radius = m.space_dim == 2 ? 1.0 : 0.5;
  c.horizon = m.space_dim == 2 ? 2500 : 2000;
  if (suite == Suite::Obstacles) c.n_obstacles = std::max(1, n_agents / 4);
  return c;
}

Scenario generate_scenario(const ScenarioConfig& config) {
  const DynamicsModel model = make_model(config.model);
  const int dim = model.space_dim;
  const int n = config.n_agents;
  const double l = config.side_length;
  const double min_sep = 4.0 * config.r;
  require(n >= 0, "negative agent count");
  require(l > 0, "side length must be positive");
  std::mt19937_64 rng(config.seed);

  Scenario sc;
  if (config.obstacles) {
    sc.obstacles = *config.obstacles;
  } else if (config.suite == Suite::Obstacles) {
    std::uniform_real_distribution<double> size_dist(0.0, 0.5);
    std::uniform_real_distribution<double> speed_dist(0.0, 0.2);
    std::bernoulli_distribution box_coin(0.5);
    for (int k = 0; k < config.n_obstacles; ++k) {
      const Vec c = random_point(rng, dim, 0.0, l);
      const Vec v = speed_dist(rng) * random_direction(rng, dim);
      if (box_coin(rng)) {
        Vec s(dim);
        for (int a = 0; a < dim; ++a) s(a) = size_dist(rng);
        sc.obstacles.push_back(make_box(c, s, v));
      } else {
        sc.obstacles.push_back(make_circle(c, size_dist(rng), v));
      }
    }
  }

  std::vector<Vec> starts, goals;
  if (config.suite == Suite::Crossing) {
    // Antipodal swaps on a circle (2D) or sphere (3D) around the center.
    const double radius = 0.5 * l - 0.5;
    require(radius > 0, "crossing workspace too small");
    std::uniform_real_distribution<double> jitter(-0.05, 0.05);
    const Vec center = Vec::Constant(dim, 0.5 * l);
    const auto dirs = ray_directions(dim, std::max(n, 1));
    const double phase = jitter(rng) * 2.0 * std::numbers::pi;
    for (int i = 0; i < n; ++i) {
      Vec d = dirs[i];
      if (dim == 2) {
        const double a = 2.0 * std::numbers::pi * i / n + phase + jitter(rng);
        d << std::cos(a), std::sin(a);
      }
      starts.push_back(center + radius * d);
      goals.push_back(center - radius * d);
    }
  } else {
    for (int i = 0; i < n; ++i) {
      bool placed = false;
      for (int attempt = 0; attempt < kMaxRejections && !placed; ++attempt) {
        Vec p = random_point(rng, dim, 0.0, l);
        if (clear_of(p, starts, min_sep) && clear_of_obstacles(p, sc.obstacles, min_sep)) {
          starts.push_back(std::move(p));
          placed = true;
        }
      }
      if (!placed) throw GenerationError("could not place start for agent " + std::to_string(i));
    }
    const bool capped = config.suite == Suite::KeepDistance;
    constexpr double kMaxTravel = 4.0;
    for (int i = 0; i < n; ++i) {
      bool placed = false;
      for (int attempt = 0; attempt < kMaxRejections && !placed; ++attempt) {
        Vec p;
        if (capped) {
          const Vec lo = (starts[i].array() - kMaxTravel).cwiseMax(0.0);
          const Vec hi = (starts[i].array() + kMaxTravel).cwiseMin(l);
          p = Vec(dim);
          for (int a = 0; a < dim; ++a)
            p(a) = std::uniform_real_distribution<double>(lo(a), hi(a))(rng);
          if ((p - starts[i]).norm() > kMaxTravel) continue;
        } else {
          p = random_point(rng, dim, 0.0, l);
        }
        if (clear_of(p, goals, min_sep) && clear_of_obstacles(p, sc.obstacles, min_sep)) {
          goals.push_back(std::move(p));
          placed = true;
        }
      }
      if (!placed) throw GenerationError("could not place goal for agent " + std::to_string(i));
    }
  }

  for (int i = 0; i < n; ++i) {
    AgentState a;
    a.id = i;
    a.x = state_at_point(model, starts[i]);
    if (model.kind == ModelKind::DubinsCar) {
      const Vec to_goal = goals[i] - starts[i];
      a.x(2) = std::atan2(to_goal(1), to_goal(0));
    }
    a.goal = goals[i];
    sc.agents.push_back(std::move(a));
  }
  return sc;
}

std::vector<bool> collision_flags(const DynamicsModel& model, std::span<const AgentState> agents,
                                  std::span<const Obstacle> obstacles, double r) {
  const auto positions = agent_positions(model, agents);
  std::vector<bool> flags(agents.size(), false);
  for (const auto& [i, j] : neighbor_pairs(positions, 2.0 * r)) {
    flags[i] = true;
    flags[j] = true;
  }
  for (std::size_t i = 0; i < agents.size(); ++i)
    for (const auto& o : obstacles)
      if (o.signed_distance(positions[i]) <= r) flags[i] = true;
  return flags;
}

bool reached_goal(const DynamicsModel& model, const AgentState& agent, double tol) {
  return (position(model, agent.x) - agent.goal).norm() < tol;
}

WorldStep step_world(const DynamicsModel& model, std::span<const AgentState> agents,
                     std::span<const Vec> controls, std::span<const Obstacle> obstacles, double dt,
                     double r) {
  require(controls.size() == agents.size(), "one control per agent expected");
  WorldStep out;
  out.agents.assign(agents.begin(), agents.end());
  for (std::size_t i = 0; i < agents.size(); ++i)
    out.agents[i].x = step(model, agents[i].x, controls[i], dt);
  out.obstacles.assign(obstacles.begin(), obstacles.end());
  for (auto& o : out.obstacles) o.center += dt * o.velocity;
  out.collided = collision_flags(model, out.agents, out.obstacles, r);
  out.all_reached = std::all_of(out.agents.begin(), out.agents.end(),
                                [&](const AgentState& a) { return reached_goal(model, a, r); });
  return out;
}

std::vector<LidarScan> scan_all(const DynamicsModel& model, std::span<const AgentState> agents,
                                std::span<const Obstacle> obstacles, int n_rays, double R) {
  std::vector<LidarScan> scans;
  scans.reserve(agents.size());
  for (const auto& a : agents) scans.push_back(raycast(position(model, a.x), obstacles, n_rays, R));
  return scans;
}

GraphSnapshot observe(const DynamicsModel& model, std::span<const AgentState> agents,
                      std::span<const Obstacle> obstacles, int n_rays, double R) {
  if (obstacles.empty()) return build_graph(model, agents, {}, R);
  const auto scans = scan_all(model, agents, obstacles, n_rays, R);
  return build_graph(model, agents, scans, R);
}

// ---------------------------------------------------------------------------
// Scenario files

namespace {

using nlohmann::json;

Vec vec_from_json(const json& j, const std::string& field) {
  if (!j.is_array()) throw ConfigError(field + ": expected an array of numbers");
  Vec v(static_cast<int>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) {
    if (!j[k].is_number()) throw ConfigError(field + ": expected an array of numbers");
    v(static_cast<int>(k)) = j[k].get<double>();
  }
  return v;
}

json vec_to_json(const Vec& v) {
  json j = json::array();
  for (int k = 0; k < v.size(); ++k) j.push_back(v(k));
  return j;
}

template <typename T>
T get_field(const json& j, const std::string& key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + key + ": " + e.what());
  }
}

Obstacle obstacle_from_json(const json& j, int index, int dim) {
  const std::string where = "obstacles[" + std::to_string(index) + "].";
  static const std::set<std::string> allowed = {"shape", "center", "velocity", "radius", "size"};
  for (const auto& item : j.items())
    if (!allowed.count(item.key())) throw ConfigError(where + item.key() + ": unknown key");
  const auto shape = get_field<std::string>(j, "shape", where);
  const Vec c = vec_from_json(j.at("center"), where + "center");
  const Vec v = j.contains("velocity") ? vec_from_json(j.at("velocity"), where + "velocity")
                                       : Vec::Zero(c.size());
  if (c.size() != dim || v.size() != dim)
    throw ConfigError(where + "center: dimension does not match model");
  Obstacle o;
  if (shape == "circle") {
    const double radius = get_field<double>(j, "radius", where);
    if (radius < 0 || radius > 0.5) throw ConfigError(where + "radius: must lie in [0, 0.5]");
    o = make_circle(c, radius, v);
  } else if (shape == "box") {
    const Vec s = vec_from_json(j.at("size"), where + "size");
    if (s.size() != dim || (s.array() < 0).any() || (s.array() > 0.5).any())
      throw ConfigError(where + "size: entries must lie in [0, 0.5]");
    o = make_box(c, s, v);
  } else {
    throw ConfigError(where + "shape: expected 'circle' or 'box'");
  }
  if (v.norm() > 0.2 + 1e-12) throw ConfigError(where + "velocity: speed must be <= 0.2");
  return o;
}

}  // namespace

ScenarioConfig scenario_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario: parse error: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("scenario: expected an object");
  static const std::set<std::string> allowed = {
      "model", "n_agents", "side_length", "r",         "sensing_radius", "dt",
      "horizon", "seed",   "suite",       "obstacles", "n_obstacles",    "n_rays"};
  for (const auto& item : j.items())
    if (!allowed.count(item.key())) throw ConfigError(item.key() + ": unknown key");

  const ModelKind model = parse_model_kind(get_field<std::string>(j, "model", ""));
  const int n = get_field<int>(j, "n_agents", "");
  if (n < 0) throw ConfigError("n_agents: must be non-negative");
  const Suite suite = j.contains("suite") ? parse_suite(get_field<std::string>(j, "suite", ""))
                                          : Suite::KeepDensity;
  const std::uint64_t seed = j.contains("seed") ? get_field<std::uint64_t>(j, "seed", "") : 0;
  ScenarioConfig c = default_scenario(model, std::max(n, 1), suite, seed);
  c.n_agents = n;
  if (j.contains("side_length")) c.side_length = get_field<double>(j, "side_length", "");
  if (j.contains("r")) c.r = get_field<double>(j, "r", "");
  if (j.contains("sensing_radius")) c.sensing_radius = get_field<double>(j, "sensing_radius", "");
  if (j.contains("dt")) c.dt = get_field<double>(j, "dt", "");
  if (j.contains("horizon")) c.horizon = get_field<int>(j, "horizon", "");
  if (j.contains("n_obstacles")) c.n_obstacles = get_field<int>(j, "n_obstacles", "");
  if (j.contains("n_rays")) c.n_rays = get_field<int>(j, "n_rays", "");
  if (c.side_length <= 0) throw ConfigError("side_length: must be positive");
  if (c.r <= 0) throw ConfigError("r: must be positive");
  if (c.sensing_radius <= 0) throw ConfigError("sensing_radius: must be positive");
  if (c.dt <= 0) throw ConfigError("dt: must be positive");
  if (c.horizon < 0) throw ConfigError("horizon: must be non-negative");
  if (c.n_rays <= 0) throw ConfigError("n_rays: must be positive");
  if (j.contains("obstacles")) {
    const auto& arr = j.at("obstacles");
    if (!arr.is_array()) throw ConfigError("obstacles: expected an array");
    const int dim = make_model(model).space_dim;
    std::vector<Obstacle> obs;
    for (std::size_t k = 0; k < arr.size(); ++k)
      obs.push_back(obstacle_from_json(arr[k], static_cast<int>(k), dim));
    c.obstacles = std::move(obs);
  }
  return c;
}

ScenarioConfig load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("scenario: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return scenario_from_json_text(ss.str());
}

std::string scenario_to_json_text(const ScenarioConfig& c) {
  json j;
  j["model"] = to_string(c.model);
  j["n_agents"] = c.n_agents;
  j["side_length"] = c.side_length;
  j["r"] = c.r;
  j["sensing_radius"] = c.sensing_radius;
  j["dt"] = c.dt;
  j["horizon"] = c.horizon;
  j["seed"] = c.seed;
  j["suite"] = to_string(c.suite);
  j["n_obstacles"] = c.n_obstacles;
  j["n_rays"] = c.n_rays;
  if (c.obstacles) {
    json arr = json::array();
    for (const auto& o : *c.obstacles) {
      json jo;
      jo["shape"] = o.shape == ShapeKind::Circle ? "circle" : "box";
      jo["center"] = vec_to_json(o.center);
      jo["velocity"] = vec_to_json(o.velocity);
      if (o.shape == ShapeKind::Circle)
        jo["radius"] = o.radius;
      else
        jo["size"] = vec_to_json(o.size);
      arr.push_back(std::move(jo));
    }
    j["obstacles"] = std::move(arr);
  }
  return j.dump(2);
}

}  // namespace gcbf
