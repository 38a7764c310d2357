// Copyright 2026 The gcbf-swarm Authors
// SPDX-License-Identifier: Apache-2.0

#include "gcbf/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

namespace gcbf {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json vec_json(const Vec& v) {
  json j = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) j.push_back(v(k));
  return j;
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config field '") + key + "': wrong type");
  }
}

std::string read_text(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw ConfigError(std::string(what) + ": cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Single writer per output file.
class CsvFile {
 public:
  CsvFile(const fs::path& path, const std::string& header) : os_(path) {
    if (!os_) throw ConfigError("cannot write '" + path.string() + "'");
    os_ << header;
  }
  void write(const std::string& line) { os_ << line; }

 private:
  std::ofstream os_;
};

struct Globals {
  std::uint64_t seed = 0;
  double scale = 0.125;
  int workers = 1;
  std::string out_dir = ".";
};

std::vector<Networks> load_policies(const std::vector<std::string>& paths) {
  std::vector<Networks> out;
  for (const auto& p : paths) out.push_back(load_checkpoint(p));
  return out;
}

}  // namespace

TrainConfig train_config_from_json_text(const std::string& text, TrainConfig c) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: parse error: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: expected an object");
  static const std::set<std::string> allowed = {
      "model", "scale", "alpha", "gamma", "eta_safe", "eta_unsafe", "eta_deriv", "eta_ctrl",
      "lr_h", "lr_pi", "total_steps", "segment_length", "rollout_length", "n_agents",
      "crossing_fraction", "n_obstacles", "n_rays", "r", "sensing_radius", "dt", "seed",
      "checkpoint_every"};
  for (const auto& item : j.items())
    if (!allowed.count(item.key())) throw ConfigError("config field '" + item.key() + "': unknown key");
  if (j.contains("model")) {
    std::string name;
    read_field(j, "model", name);
    const ModelKind kind = parse_model_kind(name);
    if (kind != c.model) {
      // Model-specific defaults first, then the remaining explicit keys.
      TrainConfig d = default_train_config(kind);
      d.total_steps = c.total_steps;
      d.seed = c.seed;
      d.scale = c.scale;
      d.n_agents = c.n_agents;
      d.segment_length = c.segment_length;
      d.out_dir = c.out_dir;
      c = d;
    }
  }
  read_field(j, "scale", c.scale);
  read_field(j, "alpha", c.alpha);
  read_field(j, "gamma", c.gamma);
  read_field(j, "eta_safe", c.eta_safe);
  read_field(j, "eta_unsafe", c.eta_unsafe);
  read_field(j, "eta_deriv", c.eta_deriv);
  read_field(j, "eta_ctrl", c.eta_ctrl);
  read_field(j, "lr_h", c.lr_h);
  read_field(j, "lr_pi", c.lr_pi);
  read_field(j, "total_steps", c.total_steps);
  read_field(j, "segment_length", c.segment_length);
  read_field(j, "rollout_length", c.rollout_length);
  read_field(j, "n_agents", c.n_agents);
  read_field(j, "crossing_fraction", c.crossing_fraction);
  read_field(j, "n_obstacles", c.n_obstacles);
  read_field(j, "n_rays", c.n_rays);
  read_field(j, "r", c.r);
  read_field(j, "sensing_radius", c.sensing_radius);
  read_field(j, "dt", c.dt);
  read_field(j, "seed", c.seed);
  read_field(j, "checkpoint_every", c.checkpoint_every);
  validate(c);
  return c;
}

TrainConfig load_train_config(const std::string& path, TrainConfig base) {
  return train_config_from_json_text(read_text(path, "config"), std::move(base));
}

std::string train_config_to_json_text(const TrainConfig& c) {
  json j;
  j["model"] = to_string(c.model);
  j["scale"] = c.scale;
  j["alpha"] = c.alpha;
  j["gamma"] = c.gamma;
  j["eta_safe"] = c.eta_safe;
  j["eta_unsafe"] = c.eta_unsafe;
  j["eta_deriv"] = c.eta_deriv;
  j["eta_ctrl"] = c.eta_ctrl;
  j["lr_h"] = c.lr_h;
  j["lr_pi"] = c.lr_pi;
  j["total_steps"] = c.total_steps;
  j["segment_length"] = c.segment_length;
  j["rollout_length"] = c.rollout_length;
  j["n_agents"] = c.n_agents;
  j["crossing_fraction"] = c.crossing_fraction;
  j["n_obstacles"] = c.n_obstacles;
  j["n_rays"] = c.n_rays;
  j["r"] = c.r;
  j["sensing_radius"] = c.sensing_radius;
  j["dt"] = c.dt;
  j["seed"] = c.seed;
  j["checkpoint_every"] = c.checkpoint_every;
  return j.dump(2);
}

std::string trajectory_record_json(const TrajectoryRecord& r) {
  json j;
  j["type"] = "step";
  j["t"] = r.t;
  j["agent_id"] = r.agent_id;
  j["state"] = vec_json(r.state);
  j["control"] = vec_json(r.control);
  j["mode"] = r.mode;
  j["h"] = r.h_value ? json(*r.h_value) : json(nullptr);
  j["collision"] = r.collision;
  json lidar = json::array();
  for (const auto& p : r.lidar) lidar.push_back(vec_json(p));
  j["lidar"] = std::move(lidar);
  return j.dump();
}

std::string metrics_record_json(const MetricsRecord& m) {
  json j;
  j["type"] = "metrics";
  j["safety_rate"] = m.safety_rate;
  j["reaching_rate"] = m.reaching_rate;
  j["success_rate"] = m.success_rate;
  j["safe"] = m.safe;
  j["reached"] = m.reached;
  j["success"] = m.success;
  j["n_agents"] = m.n_agents;
  j["suite"] = to_string(m.suite);
  j["seed"] = m.seed;
  j["controller"] = to_string(m.controller);
  j["steps"] = m.steps;
  j["wall_time_s"] = m.wall_time_s;
  j["mean_step_time_s"] = m.mean_step_time_s;
  return j.dump();
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args);
}

int run_cli(const std::vector<std::string>& input) {
  CLI::App app{"Graph control barrier functions for multi-agent collision avoidance"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--scale", g.scale, "Network width scale in (0, 1]");
  app.add_option("--workers", g.workers, "Worker threads for evaluation")->check(CLI::PositiveNumber);
  app.add_option("--out-dir", g.out_dir, "Directory for output files");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train the certificate and policy networks");
  std::string config_path;
  std::optional<int> steps, agents_train, segment, ckpt_every;
  std::string model_train = "SimpleCar";
  train_cmd->add_option("--config", config_path, "Training config (JSON)");
  train_cmd->add_option("--model", model_train, "Agent model");
  train_cmd->add_option("--steps", steps, "Optimizer steps");
  train_cmd->add_option("--agents", agents_train, "Agents per training scenario");
  train_cmd->add_option("--segment", segment, "Environment steps per optimizer step");
  train_cmd->add_option("--checkpoint-every", ckpt_every, "Checkpoint interval in steps");

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "Run one episode and export the trajectory");
  std::string sim_ckpt, sim_scenario, sim_out, sim_controller, sim_model = "SimpleCar",
                                                                sim_suite = "keep_density";
  int sim_agents = 8;
  bool nominal_only = false;
  std::optional<int> sim_horizon;
  sim_cmd->add_option("--checkpoint", sim_ckpt, "Checkpoint file");
  sim_cmd->add_option("--scenario", sim_scenario, "Scenario file (JSON)");
  sim_cmd->add_option("--controller", sim_controller,
                      "nominal | gcbf | learned | qp-central | qp-decentral");
  sim_cmd->add_flag("--nominal-only", nominal_only, "Apply the nominal controller only");
  sim_cmd->add_option("--model", sim_model, "Agent model when no scenario file is given");
  sim_cmd->add_option("--suite", sim_suite, "Suite layout when no scenario file is given");
  sim_cmd->add_option("--agents", sim_agents, "Agents when no scenario file is given");
  sim_cmd->add_option("--horizon", sim_horizon, "Override the episode horizon");
  sim_cmd->add_option("--out", sim_out, "Trajectory file (default <out-dir>/trajectory.jsonl)");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Run a suite and write result tables");
  std::vector<std::string> eval_ckpts;
  std::string eval_suite = "keep_density", eval_controller = "gcbf", eval_model = "SimpleCar";
  std::vector<int> eval_agents = {4, 8, 16, 32};
  int eval_instances = 16;
  std::optional<int> eval_horizon;
  eval_cmd->add_option("--checkpoint", eval_ckpts, "Checkpoint files (one per policy seed)");
  eval_cmd->add_option("--suite", eval_suite, "increase_density | keep_density | keep_distance | obstacles | crossing");
  eval_cmd->add_option("--controller", eval_controller, "Controller kind");
  eval_cmd->add_option("--model", eval_model, "Agent model");
  eval_cmd->add_option("--agents", eval_agents, "Agent counts")->delimiter(',');
  eval_cmd->add_option("--instances", eval_instances, "Instances per agent count")->check(CLI::NonNegativeNumber);
  eval_cmd->add_option("--horizon", eval_horizon, "Override the episode horizon");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Ablation sweep over one parameter");
  std::string sweep_kind;
  std::vector<double> sweep_values;
  std::vector<std::string> sweep_ckpts;
  std::string sweep_suite = "keep_density", sweep_controller = "gcbf", sweep_model = "SimpleCar";
  std::vector<int> sweep_agents = {8};
  int sweep_instances = 4;
  int sweep_train_steps = 1000;
  std::optional<int> sweep_horizon;
  sweep_cmd->add_option("--kind", sweep_kind, "sensing_radius | refine_iters | refine_lr | alpha")->required();
  sweep_cmd->add_option("--values", sweep_values, "Values (default: the standard grid)")->delimiter(',');
  sweep_cmd->add_option("--checkpoint", sweep_ckpts, "Checkpoint files");
  sweep_cmd->add_option("--suite", sweep_suite, "Suite");
  sweep_cmd->add_option("--controller", sweep_controller, "Controller kind");
  sweep_cmd->add_option("--model", sweep_model, "Agent model");
  sweep_cmd->add_option("--agents", sweep_agents, "Agent counts")->delimiter(',');
  sweep_cmd->add_option("--instances", sweep_instances, "Instances per value")->check(CLI::NonNegativeNumber);
  sweep_cmd->add_option("--train-steps", sweep_train_steps, "Training steps per alpha");
  sweep_cmd->add_option("--horizon", sweep_horizon, "Override the episode horizon");

  // qp-bench
  auto* qp_cmd = app.add_subcommand("qp-bench", "Handcrafted CBF-QP safety and timing");
  std::vector<int> qp_agents = {16, 32, 64, 128};
  int qp_instances = 16;
  std::optional<int> qp_horizon;
  qp_cmd->add_option("--agents", qp_agents, "Agent counts")->delimiter(',');
  qp_cmd->add_option("--instances", qp_instances, "Instances per agent count")->check(CLI::NonNegativeNumber);
  qp_cmd->add_option("--horizon", qp_horizon, "Override the episode horizon");

  try {
    std::vector<std::string> reversed(input.rbegin(), input.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (!(g.scale > 0 && g.scale <= 1)) throw ConfigError("--scale must lie in (0, 1]");
    const fs::path out_dir(g.out_dir);
    fs::create_directories(out_dir);

    if (*train_cmd) {
      TrainConfig c = default_train_config(parse_model_kind(model_train));
      c.seed = g.seed;
      c.scale = g.scale;
      c.out_dir = g.out_dir;
      if (!config_path.empty()) {
        c = load_train_config(config_path, c);
        c.out_dir = g.out_dir;
      }
      if (steps) c.total_steps = *steps;
      if (agents_train) c.n_agents = *agents_train;
      if (segment) c.segment_length = *segment;
      if (ckpt_every) c.checkpoint_every = *ckpt_every;
      validate(c);
      std::ofstream(out_dir / "train_config.json") << train_config_to_json_text(c) << '\n';
      const int report = std::max(1, c.total_steps / 20);
      train(c, [&](const TrainLogRow& row) {
        if ((row.step + 1) % report == 0)
          std::cerr << "step " << row.step + 1 << "/" << c.total_steps << " loss " << row.terms.total
                    << " epsilon " << row.epsilon << '\n';
      });
      std::cout << (out_dir / "final.ckpt").string() << '\n';
      return 0;
    }

    if (*sim_cmd) {
      ScenarioConfig sc;
      if (!sim_scenario.empty()) {
        sc = load_scenario_file(sim_scenario);
      } else {
        sc = default_scenario(parse_model_kind(sim_model), sim_agents, parse_suite(sim_suite), g.seed);
      }
      if (sim_horizon) sc.horizon = *sim_horizon;
      EpisodeOptions opt;
      std::optional<Networks> nets;
      if (!sim_ckpt.empty()) nets = load_checkpoint(sim_ckpt);
      if (nominal_only) {
        opt.controller = ControllerKind::Nominal;
      } else if (!sim_controller.empty()) {
        opt.controller = parse_controller(sim_controller);
      } else {
        opt.controller = nets ? ControllerKind::Gcbf : ControllerKind::Nominal;
      }
      if (nets && nets->model != sc.model)
        throw ConfigError("checkpoint model " + to_string(nets->model) +
                          " does not match scenario model " + to_string(sc.model));
      const fs::path out = sim_out.empty() ? out_dir / "trajectory.jsonl" : fs::path(sim_out);
      std::ofstream os(out);
      if (!os) throw ConfigError("cannot write '" + out.string() + "'");
      const EpisodeResult res = run_episode(sc, opt, nets ? &*nets : nullptr, [&](const TrajectoryRecord& r) {
        os << trajectory_record_json(r) << '\n';
      });
      os << metrics_record_json(res.metrics) << '\n';
      std::cout << "safety " << res.metrics.safety_rate << " reaching " << res.metrics.reaching_rate
                << " success " << res.metrics.success_rate << '\n';
      return 0;
    }

    if (*eval_cmd) {
      SuiteOptions o;
      o.suite = parse_suite(eval_suite);
      o.model = parse_model_kind(eval_model);
      o.n_agents = eval_agents;
      o.instances = eval_instances;
      o.base_seed = g.seed;
      o.horizon = eval_horizon;
      o.workers = g.workers;
      o.episode.controller = parse_controller(eval_controller);
      const auto policies = load_policies(eval_ckpts);
      for (const auto& p : policies)
        if (p.model != o.model) throw ConfigError("checkpoint model does not match --model");
      const auto records = o.instances > 0 ? run_suite(o, policies) : std::vector<MetricsRecord>{};
      CsvFile results(out_dir / "results.csv", results_csv_header());
      for (const auto& r : records) results.write(results_csv_line(r));
      CsvFile plot(out_dir / "plot.csv", plot_csv_header());
      for (const auto& row : aggregate(records)) plot.write(plot_csv_line(row));
      std::cout << records.size() << " runs\n";
      return 0;
    }

    if (*sweep_cmd) {
      const SweepKind kind = parse_sweep_kind(sweep_kind);
      SuiteOptions o;
      o.suite = parse_suite(sweep_suite);
      o.model = parse_model_kind(sweep_model);
      o.n_agents = sweep_agents;
      o.instances = sweep_instances;
      o.base_seed = g.seed;
      o.horizon = sweep_horizon;
      o.workers = g.workers;
      o.episode.controller = parse_controller(sweep_controller);
      const auto policies = load_policies(sweep_ckpts);
      const auto values = sweep_values.empty() ? default_sweep_values(kind) : sweep_values;
      auto trainer = [&](double alpha) {
        TrainConfig c = default_train_config(o.model);
        c.alpha = alpha;
        c.seed = g.seed;
        c.scale = g.scale;
        c.total_steps = sweep_train_steps;
        return train(c).nets;
      };
      if (kind != SweepKind::Alpha && needs_networks(o.episode.controller) && policies.empty())
        throw ConfigError("sweep '" + sweep_kind + "' needs --checkpoint for controller " +
                          to_string(o.episode.controller));
      const auto rows = ablation_sweep(kind, values, o, policies, trainer);
      CsvFile csv(out_dir / "sweep.csv", sweep_csv_header());
      for (const auto& r : rows) csv.write(sweep_csv_line(r));
      std::cout << rows.size() << " rows\n";
      return 0;
    }

    if (*qp_cmd) {
      const auto rows = qp_benchmark(qp_agents, qp_instances, g.seed, qp_horizon, g.workers);
      CsvFile csv(out_dir / "qp_bench.csv", qp_bench_csv_header());
      for (const auto& r : rows) csv.write(qp_bench_csv_line(r));
      std::cout << rows.size() << " rows\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace gcbf
