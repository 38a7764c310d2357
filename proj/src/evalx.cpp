// Copyright 2026 The gcbf-swarm Authors
// SPDX-License-Identifier: Apache-2.0

#include "gcbf/evalx.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

#include "gcbf/qpbase.hpp"

namespace gcbf {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Runs job(k) for k in [0, count) on up to `workers` threads.
void parallel_for(int count, int workers, const std::function<void(int)>& job) {
  workers = std::max(1, std::min(workers, count));
  if (workers == 1) {
    for (int k = 0; k < count; ++k) job(k);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int k = next++; k < count; k = next++) {
        try {
          job(k);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  mean = 0.0;
  sd = 0.0;
  if (xs.empty()) return;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  for (double x : xs) sd += (x - mean) * (x - mean);
  sd = std::sqrt(sd / static_cast<double>(xs.size()));
}

}  // namespace

std::string to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::Nominal: return "nominal";
    case ControllerKind::Gcbf: return "gcbf";
    case ControllerKind::Learned: return "learned";
    case ControllerKind::QpCentral: return "qp-central";
    case ControllerKind::QpDecentral: return "qp-decentral";
  }
  return "unknown";
}

ControllerKind parse_controller(const std::string& name) {
  for (ControllerKind k : {ControllerKind::Nominal, ControllerKind::Gcbf, ControllerKind::Learned,
                           ControllerKind::QpCentral, ControllerKind::QpDecentral})
    if (to_string(k) == name) return k;
  throw ConfigError("unknown controller '" + name + "'");
}

bool needs_networks(ControllerKind kind) {
  return kind == ControllerKind::Gcbf || kind == ControllerKind::Learned;
}

MetricsRecord score_run(const RunTrace& trace, double goal_tol) {
  const std::size_t n = trace.goals.size();
  require(trace.final_positions.size() == n, "one final position per goal expected");
  MetricsRecord m;
  m.n_agents = static_cast<int>(n);
  m.safe.assign(n, true);
  m.reached.assign(n, false);
  m.success.assign(n, false);
  for (const auto& flags : trace.collided) {
    require(flags.size() == n, "collision flags must cover every agent");
    for (std::size_t i = 0; i < n; ++i)
      if (flags[i]) m.safe[i] = false;
  }
  int safe = 0, reached = 0, success = 0;
  for (std::size_t i = 0; i < n; ++i) {
    m.reached[i] = (trace.final_positions[i] - trace.goals[i]).norm() < goal_tol;
    m.success[i] = m.safe[i] && m.reached[i];
    safe += m.safe[i];
    reached += m.reached[i];
    success += m.success[i];
  }
  if (n > 0) {
    m.safety_rate = static_cast<double>(safe) / n;
    m.reaching_rate = static_cast<double>(reached) / n;
    m.success_rate = static_cast<double>(success) / n;
  }
  return m;
}

EpisodeResult run_episode(const ScenarioConfig& scenario, const EpisodeOptions& options,
                          const Networks* nets,
                          const std::function<void(const TrajectoryRecord&)>& sink) {
  const DynamicsModel model = make_model(scenario.model);
  const bool qp = options.controller == ControllerKind::QpCentral ||
                  options.controller == ControllerKind::QpDecentral;
  if (needs_networks(options.controller)) {
    if (!nets) throw ConfigError("controller '" + to_string(options.controller) + "' needs a checkpoint");
    if (nets->model != scenario.model)
      throw ConfigError("checkpoint model " + to_string(nets->model) + " does not match scenario model " +
                        to_string(scenario.model));
  }
  if (qp && scenario.model != ModelKind::SimpleCar)
    throw ConfigError("the handcrafted QP filters support SimpleCar only");

  const auto t_start = Clock::now();
  Scenario sc = generate_scenario(scenario);
  std::vector<AgentState> agents = std::move(sc.agents);
  std::vector<Obstacle> obstacles = std::move(sc.obstacles);
  const int N = static_cast<int>(agents.size());

  EpisodeResult res;
  res.trace.collided.push_back(collision_flags(model, agents, obstacles, scenario.r));
  for (const auto& a : agents) res.trace.goals.push_back(a.goal);

  FilterConfig fcfg;
  fcfg.alpha = options.alpha;
  fcfg.r = scenario.r;
  fcfg.sensing_radius = scenario.sensing_radius;
  fcfg.accel_bound = model.control_hi(0);

  double controller_time = 0.0;
  int fallback_steps = 0;
  int steps = 0;
  for (int t = 0; t < scenario.horizon; ++t) {
    if (options.stop_when_reached &&
        std::all_of(agents.begin(), agents.end(),
                    [&](const AgentState& a) { return reached_goal(model, a, options.goal_tol); }))
      break;
    std::vector<Vec> controls(N);
    std::vector<std::string> modes(N, "nominal");
    std::vector<std::optional<double>> hs(N);
    GraphSnapshot graph;
    if (qp) {
      std::vector<Vec> states(N), nominals(N);
      for (int i = 0; i < N; ++i) {
        states[i] = agents[i].x;
        nominals[i] = nominal_control(model, agents[i].x, agents[i].goal);
      }
      const FilterResult f = options.controller == ControllerKind::QpCentral
                                 ? centralized_filter(states, nominals, fcfg)
                                 : decentralized_filter(states, nominals, fcfg);
      controller_time += options.controller == ControllerKind::QpCentral
                             ? f.solve_time_s
                             : f.solve_time_s / std::max(1, N);
      controls = f.controls;
      for (int i = 0; i < N; ++i) {
        modes[i] = f.fallback[i] ? "fallback" : "filtered";
        fallback_steps += f.fallback[i];
      }
    } else {
      graph = observe(model, agents, obstacles, scenario.n_rays, scenario.sensing_radius);
      const auto t0 = Clock::now();
      const Mat u_nom = nominal_controls(model, graph);
      if (options.controller == ControllerKind::Nominal) {
        for (int i = 0; i < N; ++i) controls[i] = u_nom.row(i).transpose();
      } else if (options.controller == ControllerKind::Learned) {
        ad::Tape tape;
        const EdgeBatch batch = make_edge_batch(tape, model, graph);
        const Mat u = policy_controls(tape, nets->policy, model, batch, tape.constant(u_nom), false)
                          .control.value();
        for (int i = 0; i < N; ++i) {
          controls[i] = u.row(i).transpose();
          modes[i] = "learned";
        }
      } else {
        const auto decisions =
            select_controls(*nets, model, graph, u_nom, scenario.dt, options.alpha, options.refine);
        for (int i = 0; i < N; ++i) {
          controls[i] = decisions[i].control;
          modes[i] = to_string(decisions[i].mode);
          hs[i] = decisions[i].h_value;
        }
      }
      controller_time += seconds_since(t0);
    }

    WorldStep w = step_world(model, agents, controls, obstacles, scenario.dt, scenario.r);
    if (sink) {
      std::vector<std::vector<Vec>> lidar(N);
      for (std::size_t k = 0; k < graph.hit_owner.size(); ++k) {
        const int node = graph.n_agents + static_cast<int>(k);
        lidar[graph.hit_owner[k]].push_back(
            position(model, graph.node_states.row(node).transpose()));
      }
      for (int i = 0; i < N; ++i) {
        TrajectoryRecord rec;
        rec.t = t;
        rec.agent_id = agents[i].id;
        rec.state = agents[i].x;
        rec.control = controls[i];
        rec.mode = modes[i];
        rec.h_value = hs[i];
        rec.collision = w.collided[i];
        rec.lidar = std::move(lidar[i]);
        sink(rec);
      }
    }
    agents = std::move(w.agents);
    obstacles = std::move(w.obstacles);
    res.trace.collided.push_back(std::move(w.collided));
    ++steps;
  }

  for (const auto& a : agents) res.trace.final_positions.push_back(position(model, a.x));
  res.metrics = score_run(res.trace, options.goal_tol);
  res.metrics.suite = scenario.suite;
  res.metrics.seed = scenario.seed;
  res.metrics.controller = options.controller;
  res.metrics.steps = steps;
  res.metrics.wall_time_s = seconds_since(t_start);
  res.metrics.mean_step_time_s = steps > 0 ? controller_time / steps : 0.0;
  res.metrics.fallback_steps = fallback_steps;
  return res;
}

ScenarioConfig suite_scenario(const SuiteOptions& o, int n_agents, int instance) {
  const std::uint64_t seed =
      o.base_seed * 1000003ULL + static_cast<std::uint64_t>(n_agents) * 1009ULL +
      static_cast<std::uint64_t>(instance);
  ScenarioConfig c = default_scenario(o.model, n_agents, o.suite, seed);
  if (o.horizon) c.horizon = *o.horizon;
  if (o.sensing_radius) c.sensing_radius = *o.sensing_radius;
  return c;
}

std::vector<MetricsRecord> run_suite(const SuiteOptions& o, const std::vector<Networks>& policies) {
  const bool nn = needs_networks(o.episode.controller);
  if (nn && policies.empty())
    throw ConfigError("controller '" + to_string(o.episode.controller) + "' needs at least one checkpoint");
  const int n_policies = nn ? static_cast<int>(policies.size()) : 1;
  struct Job {
    int n;
    int policy;
    int instance;
  };
  std::vector<Job> jobs;
  for (int n : o.n_agents)
    for (int p = 0; p < n_policies; ++p)
      for (int k = 0; k < o.instances; ++k) jobs.push_back({n, p, k});
  std::vector<MetricsRecord> out(jobs.size());
  parallel_for(static_cast<int>(jobs.size()), o.workers, [&](int j) {
    const Job& job = jobs[j];
    const ScenarioConfig sc = suite_scenario(o, job.n, job.instance);
    MetricsRecord m = run_episode(sc, o.episode, nn ? &policies[job.policy] : nullptr).metrics;
    m.policy_seed = static_cast<std::uint64_t>(job.policy);
    out[j] = std::move(m);
  });
  return out;
}

std::vector<AggregateRow> aggregate(const std::vector<MetricsRecord>& records) {
  using Key = std::tuple<int, int, int>;
  std::map<Key, std::vector<const MetricsRecord*>> groups;
  std::vector<Key> order;
  for (const auto& r : records) {
    const Key key{static_cast<int>(r.suite), static_cast<int>(r.controller), r.n_agents};
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&r);
  }
  std::vector<AggregateRow> out;
  for (const Key& key : order) {
    const auto& g = groups[key];
    AggregateRow row;
    row.suite = g.front()->suite;
    row.controller = g.front()->controller;
    row.n_agents = g.front()->n_agents;
    row.runs = static_cast<int>(g.size());
    std::vector<double> s, re, su;
    for (const auto* r : g) {
      s.push_back(r->safety_rate);
      re.push_back(r->reaching_rate);
      su.push_back(r->success_rate);
    }
    mean_std(s, row.safety_mean, row.safety_std);
    mean_std(re, row.reaching_mean, row.reaching_std);
    mean_std(su, row.success_mean, row.success_std);
    out.push_back(row);
  }
  return out;
}

std::string to_string(SweepKind kind) {
  switch (kind) {
    case SweepKind::SensingRadius: return "sensing_radius";
    case SweepKind::RefineIters: return "refine_iters";
    case SweepKind::RefineLr: return "refine_lr";
    case SweepKind::Alpha: return "alpha";
  }
  return "unknown";
}

SweepKind parse_sweep_kind(const std::string& name) {
  for (SweepKind k : {SweepKind::SensingRadius, SweepKind::RefineIters, SweepKind::RefineLr,
                      SweepKind::Alpha})
    if (to_string(k) == name) return k;
  throw ConfigError("unknown sweep kind '" + name + "'");
}

std::vector<double> default_sweep_values(SweepKind kind) {
  switch (kind) {
    case SweepKind::SensingRadius: return {0.05, 0.1, 0.2, 0.5, 0.75, 1.0};
    case SweepKind::RefineIters: return {0, 10, 20, 30, 40, 50, 60, 70, 80, 90};
    case SweepKind::RefineLr: return {0.03, 0.1, 0.3, 1.0, 3.0, 10.0};
    case SweepKind::Alpha: return {0.01, 0.1, 1.0, 10.0, 100.0};
  }
  return {};
}

std::vector<SweepRow> ablation_sweep(SweepKind kind, const std::vector<double>& values,
                                     const SuiteOptions& options,
                                     const std::vector<Networks>& policies,
                                     const std::function<Networks(double)>& train_for_alpha) {
  std::vector<SweepRow> out;
  for (double v : values) {
    SuiteOptions o = options;
    std::vector<Networks> trained;
    const std::vector<Networks>* use = &policies;
    switch (kind) {
      case SweepKind::SensingRadius:
        require(v > 0, "sensing radius must be positive");
        o.sensing_radius = v;
        break;
      case SweepKind::RefineIters:
        require(v >= 0 && v == std::floor(v), "refine iterations must be a non-negative integer");
        o.episode.refine.max_iters = static_cast<int>(v);
        break;
      case SweepKind::RefineLr:
        require(v > 0, "refine step size must be positive");
        o.episode.refine.step_size = v;
        break;
      case SweepKind::Alpha:
        require(v > 0, "alpha must be positive");
        o.episode.alpha = v;
        if (train_for_alpha && needs_networks(o.episode.controller)) {
          trained.push_back(train_for_alpha(v));
          use = &trained;
        }
        break;
    }
    const auto records = run_suite(o, *use);
    for (const auto& row : aggregate(records)) out.push_back({kind, v, row});
    if (records.empty()) {
      AggregateRow empty;
      empty.suite = o.suite;
      empty.controller = o.episode.controller;
      out.push_back({kind, v, empty});
    }
  }
  return out;
}

std::vector<QpBenchRow> qp_benchmark(const std::vector<int>& n_agents, int instances,
                                     std::uint64_t base_seed, std::optional<int> horizon,
                                     int workers) {
  std::vector<QpBenchRow> out;
  for (int n : n_agents) {
    for (ControllerKind mode : {ControllerKind::QpCentral, ControllerKind::QpDecentral}) {
      SuiteOptions o;
      o.suite = Suite::IncreaseDensity;
      o.model = ModelKind::SimpleCar;
      o.n_agents = {n};
      o.instances = instances;
      o.base_seed = base_seed;
      o.horizon = horizon;
      o.episode.controller = mode;
      o.workers = workers;
      const auto records = run_suite(o, {});
      QpBenchRow row;
      row.n_agents = n;
      row.mode = mode;
      double steps = 0.0;
      for (const auto& r : records) {
        row.safety_rate += r.safety_rate;
        row.mean_step_time_s += r.mean_step_time_s * r.steps;
        steps += r.steps;
      }
      if (!records.empty()) row.safety_rate /= static_cast<double>(records.size());
      if (steps > 0) row.mean_step_time_s /= steps;
      out.push_back(row);
    }
  }
  return out;
}

std::string results_csv_header() {
  return "suite,controller,n_agents,instance_seed,policy_seed,safety_rate,reaching_rate,success_rate\n";
}

std::string results_csv_line(const MetricsRecord& r) {
  std::ostringstream os;
  os << to_string(r.suite) << ',' << to_string(r.controller) << ',' << r.n_agents << ',' << r.seed
     << ',' << r.policy_seed << ',' << fmt(r.safety_rate) << ',' << fmt(r.reaching_rate) << ','
     << fmt(r.success_rate) << '\n';
  return os.str();
}

std::string plot_csv_header() {
  return "suite,controller,n_agents,runs,safety_mean,safety_std,reaching_mean,reaching_std,"
         "success_mean,success_std\n";
}

std::string plot_csv_line(const AggregateRow& r) {
  std::ostringstream os;
  os << to_string(r.suite) << ',' << to_string(r.controller) << ',' << r.n_agents << ',' << r.runs
     << ',' << fmt(r.safety_mean) << ',' << fmt(r.safety_std) << ',' << fmt(r.reaching_mean) << ','
     << fmt(r.reaching_std) << ',' << fmt(r.success_mean) << ',' << fmt(r.success_std) << '\n';
  return os.str();
}

std::string sweep_csv_header() {
  return "kind,value,suite,controller,n_agents,runs,safety_mean,reaching_mean,success_mean\n";
}

std::string sweep_csv_line(const SweepRow& r) {
  std::ostringstream os;
  os << to_string(r.kind) << ',' << fmt(r.value) << ',' << to_string(r.result.suite) << ','
     << to_string(r.result.controller) << ',' << r.result.n_agents << ',' << r.result.runs << ','
     << fmt(r.result.safety_mean) << ',' << fmt(r.result.reaching_mean) << ','
     << fmt(r.result.success_mean) << '\n';
  return os.str();
}

std::string qp_bench_csv_header() { return "n_agents,mode,mean_step_time_s,safety_rate\n"; }

std::string qp_bench_csv_line(const QpBenchRow& r) {
  std::ostringstream os;
  os << r.n_agents << ',' << (r.mode == ControllerKind::QpCentral ? "centralized" : "decentralized")
     << ',' << fmt(r.mean_step_time_s) << ',' << fmt(r.safety_rate) << '\n';
  return os.str();
}

}  // namespace gcbf
