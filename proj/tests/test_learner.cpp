// Copyright 2026 The gcbf-swarm Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fixtures.hpp"

using namespace gcbf;
using gcbf::testing::make_agent;
using gcbf::testing::vec;

namespace {

// Certificate that outputs the constant b everywhere.
Networks constant_h(const DynamicsModel& m, double b) {
  Networks nets = init_networks(m, 0, 0.125);
  nets.gcbf.head.layers.back().weight.value.setZero();
  nets.gcbf.head.layers.back().bias.value.setConstant(b);
  return nets;
}

// One two-agent sample at separation d, both at rest with goals on the spot.
TrainSample pair_sample(const DynamicsModel& m, double d) {
  RolloutState st;
  st.scenario = default_scenario(m.kind, 2, Suite::KeepDensity, 0);
  st.agents = {make_agent(vec({1, 1, 0, 0}), vec({1, 1}), 0),
               make_agent(vec({1 + d, 1, 0, 0}), vec({1 + d, 1}), 1)};
  std::mt19937_64 rng(0);
  return collect_rollout(init_networks(m, 0, 0.125), m, st, 1.0, 1, rng).front();
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("gcbf_learner_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("config defaults and validation") {
  const TrainConfig car = default_train_config(ModelKind::SimpleCar);
  CHECK(car.alpha == 1.0);
  CHECK(car.gamma == 0.02);
  CHECK(car.eta_safe == 1.0);
  CHECK(car.eta_unsafe == 1.0);
  CHECK(car.eta_deriv == 0.5);
  CHECK(car.eta_ctrl == 0.05);
  CHECK(car.lr_h == 3e-4);
  CHECK(car.lr_pi == 1e-3);
  const TrainConfig dubins = default_train_config(ModelKind::DubinsCar);
  CHECK(dubins.eta_deriv == 0.2);
  CHECK(dubins.eta_ctrl == 0.0001);
  CHECK(default_train_config(ModelKind::SimpleDrone).sensing_radius == 0.5);

  TrainConfig bad = car;
  bad.gamma = 0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = car;
  bad.lr_pi = -1;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = car;
  bad.segment_length = 0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("epsilon schedule") {
  CHECK(epsilon_at(0, 1000) == 1.0);
  CHECK(epsilon_at(500, 1000) == 0.5);
  CHECK(epsilon_at(1000, 1000) == 0.0);
}

TEST_CASE("rollouts apply nominal or learned controls") {
  const DynamicsModel m = make_model(ModelKind::SimpleCar);
  Networks nets = init_networks(m, 1, 0.125);
  testing::randomize(nets, 2);
  TrainConfig c = default_train_config(ModelKind::SimpleCar);
  c.n_agents = 6;
  std::mt19937_64 rng(3);
  for (double eps : {1.0, 0.0}) {
    RolloutState st = start_rollout(sample_training_scenario(c, rng));
    const auto samples = collect_rollout(nets, m, st, eps, 20, rng);
    REQUIRE(samples.size() == 20);
    CHECK(st.t == 20);
    for (const auto& s : samples) {
      CHECK(s.nominal_step == (eps == 1.0));
      CHECK(s.u_nom == nominal_controls(m, s.graph));
      if (eps == 1.0) {
        CHECK(s.applied == s.u_nom);
      } else {
        for (int i = 0; i < s.graph.n_agents; ++i)
          CHECK((s.applied.row(i).transpose() -
                 policy_forward(nets.policy, m, s.graph, i, s.u_nom.row(i).transpose()))
                    .cwiseAbs()
                    .maxCoeff() < 1e-12);
        CHECK(s.applied != clamp_control(m, s.u_nom.row(0).transpose()).transpose());
      }
      CHECK(static_cast<int>(s.labels.size()) == s.graph.n_agents);
      for (int i = 0; i < s.graph.n_agents; ++i) {
        const Vec next = step(m, s.graph.agents[i].x, s.applied.row(i).transpose(), c.dt);
        CHECK(next == s.next_graph.agents[i].x);
      }
    }
    for (std::size_t k = 1; k < samples.size(); ++k)
      CHECK(samples[k].graph.node_states == samples[k - 1].next_graph.node_states);
  }
}

TEST_CASE("hdot estimates") {
  CHECK(hdot_estimate(0.10, 0.13, 0.03) == doctest::Approx(1.0).epsilon(1e-12));

  const DynamicsModel m = make_model(ModelKind::SimpleCar);
  const TrainSample s = pair_sample(m, 0.5);
  TrainSample frozen = s;
  frozen.next_graph = frozen.graph;
  Networks nets = init_networks(m, 5, 0.125);
  testing::randomize(nets, 6);
  for (int i = 0; i < 2; ++i) CHECK(hdot_estimate(nets.gcbf, m, frozen, i, 0.03) == 0.0);

  // Linear-in-time probe: h = w . p for a coasting agent.
  RolloutState st;
  st.scenario = default_scenario(ModelKind::SimpleCar, 1, Suite::KeepDensity, 0);
  st.agents = {make_agent(vec({1, 2, 0.3, -0.2}), vec({1, 2}), 0)};
  std::mt19937_64 rng(0);
  const Networks zero = init_networks(m, 0, 0.125);
  const TrainSample coast = collect_rollout(zero, m, st, 1.0, 1, rng).front();
  const Vec v = coast.graph.agents[0].x.segment(2, 2);
  const Vec w = vec({0.7, -1.3});
  auto probe = [&](const GraphSnapshot& g, int i) { return w.dot(g.agents[i].x.head(2)); };
  CHECK(std::abs(hdot_estimate(probe, coast, 0, 0.03) - w.dot(v)) < 1e-9);
}

TEST_CASE("loss term examples") {
  const DynamicsModel m = make_model(ModelKind::SimpleCar);
  const TrainConfig c = default_train_config(ModelKind::SimpleCar);
  const TrainSample safe = pair_sample(m, 0.5);
  REQUIRE(safe.labels[0] == SafetyLabel::Safe);
  auto terms = [&](double h, const TrainSample& s) {
    ad::Tape tape;
    const std::vector<TrainSample> batch = {s};
    return compute_loss(tape, constant_h(m, h), m, batch, c).terms;
  };
  CHECK(terms(0.5, safe).safe == 0.0);
  CHECK(terms(-0.01, safe).safe == doctest::Approx(0.03).epsilon(1e-12));
  // Constant h has zero hdot, so the derivative hinge is [gamma - alpha h]+.
  CHECK(terms(-0.01, safe).deriv == doctest::Approx(0.5 * 0.03).epsilon(1e-12));
  CHECK(terms(0.5, safe).deriv == 0.0);
  CHECK(terms(0.5, safe).ctrl == 0.0);

  const TrainSample unsafe = pair_sample(m, 0.08);
  REQUIRE(unsafe.labels[0] == SafetyLabel::Unsafe);
  CHECK(terms(-0.5, unsafe).unsafe == 0.0);
  CHECK(terms(0.1, unsafe).unsafe == doctest::Approx(0.12).epsilon(1e-12));
  CHECK(terms(0.1, unsafe).deriv == 0.0);

  // Buffer samples add nothing to the classification hinges.
  const TrainSample buffer = pair_sample(m, 0.15);
  REQUIRE(buffer.labels[0] == SafetyLabel::Buffer);
  const LossTerms b = terms(-0.3, buffer);
  CHECK(b.safe == 0.0);
  CHECK(b.unsafe == 0.0);
  CHECK(b.n_buffer == 2);
  CHECK(b.deriv == doctest::Approx(0.5 * 0.32).epsilon(1e-12));
}

TEST_CASE("loss terms are non-negative and add up") {
  const DynamicsModel m = make_model(ModelKind::SimpleCar);
  TrainConfig c = default_train_config(ModelKind::SimpleCar);
  c.n_agents = 8;
  for (int seed = 0; seed < 5; ++seed) {
    Networks nets = init_networks(m, seed, 0.125);
    testing::randomize(nets, seed + 50);
    std::mt19937_64 rng(seed);
    c.crossing_fraction = 1.0;
    RolloutState st = start_rollout(sample_training_scenario(c, rng));
    const auto samples = collect_rollout(nets, m, st, 0.5, 12, rng);
    ad::Tape tape;
    const LossOut out = compute_loss(tape, nets, m, samples, c);
    const LossTerms& t = out.terms;
    CHECK(t.safe >= 0);
    CHECK(t.unsafe >= 0);
    CHECK(t.deriv >= 0);
    CHECK(t.ctrl > 0);
    CHECK(t.total == doctest::Approx(t.safe + t.unsafe + t.deriv + t.ctrl).epsilon(1e-12));
    CHECK(t.n_safe + t.n_unsafe + t.n_buffer == 8 * 12);
    CHECK(out.h.rows() == 8 * 12);
  }
}

TEST_CASE("loss gradient matches central differences") {
  const DynamicsModel m = make_model(ModelKind::SimpleCar);
  TrainConfig c = default_train_config(ModelKind::SimpleCar);
  // A wide margin keeps every hinge active on this geometry.
  c.gamma = 0.5;
  for (int seed = 0; seed < 3; ++seed) {
    CAPTURE(seed);
    Networks nets = init_networks(m, seed, 0.125);
    testing::randomize(nets, seed + 10);
    // One unsafe pair plus one agent out in the safe region.
    const auto batch = testing::micro_batch(nets, seed, 2, 0.05, 0.26);
    {
      ad::Tape tape;
      const LossTerms t = compute_loss(tape, nets, m, batch, c, false).terms;
      REQUIRE(t.n_safe > 0);
      REQUIRE(t.n_unsafe > 0);
      CHECK(t.safe > 0);
      CHECK(t.unsafe > 0);
      CHECK(t.deriv > 0);
      CHECK(t.ctrl > 0);
    }
    const auto check = testing::check_loss_gradient(nets, batch, c, 3, seed);
    CHECK(check.max_rel_error < 1e-4);
    CHECK(check.max_abs_grad > 0);
  }
}

TEST_CASE("derivative hinge reaches the neighbor's controller") {
  const DynamicsModel m = make_model(ModelKind::SimpleCar);
  TrainConfig c = default_train_config(ModelKind::SimpleCar);
  c.eta_ctrl = 0.0;
  Networks nets = init_networks(m, 3, 0.125);
  testing::randomize(nets, 4);
  RolloutState st;
  st.scenario = default_scenario(ModelKind::SimpleCar, 2, Suite::KeepDensity, 0);
  st.agents = {make_agent(vec({1, 1, 0.3, 0}), vec({1.5, 1}), 0),
               make_agent(vec({1.4, 1, -0.3, 0}), vec({0.9, 1}), 1)};
  std::mt19937_64 rng(1);
  auto batch = collect_rollout(nets, m, st, 0.0, 1, rng);
  // Only agent 0 carries a derivative term; agent 1 is relabeled unsafe.
  batch[0].labels = {SafetyLabel::Safe, SafetyLabel::Unsafe};
  // Make agent 0's derivative hinge active.
  nets.gcbf.head.layers.back().bias.value(0, 0) -= 1.0;
  for (auto* p : nets.policy_parameters()) p->zero_grad();
  ad::Tape tape;
  const LossOut loss = compute_loss(tape, nets, m, batch, c);
  REQUIRE(loss.terms.deriv > 0);
  tape.backward(loss.total);
  double norm = 0;
  for (auto* p : nets.policy_parameters()) norm += p->grad.squaredNorm();
  CHECK(norm > 0);

  // Agent 0's next-step h depends on agent 1's control.
  ad::Tape t2;
  const GraphSnapshot& g = batch[0].graph;
  const ad::Var u = t2.variable(batch[0].applied);
  const ad::Var next = virtual_step(t2, m, g.node_states.topRows(2), u, c.dt);
  const EdgeBatch later = make_edge_batch(m, g, with_agent_states(t2, g, next));
  const ad::Var h = gcbf_values(t2, nets.gcbf, later, false);
  t2.backward(ad::slice_rows(h, 0, 1));
  CHECK(u.grad().row(1).norm() > 0);
}

TEST_CASE("adam first step") {
  ad::Parameter p("w", Mat::Constant(1, 3, 1.0));
  Adam adam({&p}, 0.1);
  p.grad << 2.0, -0.5, 0.0;
  adam.step();
  CHECK(p.value(0, 0) == doctest::Approx(1.0 - 0.1 * 2.0 / (2.0 + 1e-8)));
  CHECK(p.value(0, 1) == doctest::Approx(1.0 + 0.1 * 0.5 / (0.5 + 1e-8)));
  CHECK(p.value(0, 2) == 1.0);
  CHECK(adam.steps_taken() == 1);
  // Second step with the same gradient: bias-corrected moments equal the gradient.
  adam.step();
  CHECK(p.value(0, 0) == doctest::Approx(1.0 - 0.2).epsilon(1e-7));
  adam.zero_grad();
  CHECK(p.grad.isZero(0));
}

TEST_CASE("training runs are deterministic and logged") {
  TrainConfig c = default_train_config(ModelKind::SimpleCar);
  c.n_agents = 4;
  c.segment_length = 4;
  c.total_steps = 6;
  c.seed = 7;
  c.checkpoint_every = 3;
  const auto dir = scratch("run");
  c.out_dir = dir.string();
  const TrainResult a = train(c);
  c.out_dir.clear();
  const TrainResult b = train(c);
  REQUIRE(a.log.size() == 6);
  for (std::size_t k = 0; k < a.log.size(); ++k) {
    CHECK(a.log[k].terms.total == b.log[k].terms.total);
    CHECK(a.log[k].epsilon == epsilon_at(static_cast<int>(k), 6));
  }
  const auto pa = a.nets.policy_parameters(), pb = b.nets.policy_parameters();
  for (std::size_t k = 0; k < pa.size(); ++k) CHECK(pa[k]->value == pb[k]->value);
  CHECK(a.nets.step == 6);

  CHECK(std::filesystem::exists(dir / "step_3.ckpt"));
  CHECK(std::filesystem::exists(dir / "step_6.ckpt"));
  CHECK(std::filesystem::exists(dir / "final.ckpt"));
  std::ifstream log(dir / "train_log.csv");
  std::string line;
  std::getline(log, line);
  CHECK(line == "step,loss_total,loss_safe,loss_unsafe,loss_deriv,loss_ctrl,epsilon");
  int rows = 0;
  while (std::getline(log, line)) ++rows;
  CHECK(rows == 6);
  std::filesystem::remove_all(dir);
}

TEST_CASE("zero steps leave the parameters unchanged") {
  TrainConfig c = default_train_config(ModelKind::SimpleCar);
  c.total_steps = 0;
  c.seed = 3;
  const TrainResult r = train(c);
  const Networks init = init_networks(make_model(ModelKind::SimpleCar), 3, c.scale);
  const auto pa = r.nets.gcbf_parameters(), pb = init.gcbf_parameters();
  for (std::size_t k = 0; k < pa.size(); ++k) CHECK(pa[k]->value == pb[k]->value);
  CHECK(r.log.empty());
}

TEST_CASE("non-finite loss aborts with a dump") {
  TrainConfig c = default_train_config(ModelKind::SimpleCar);
  c.n_agents = 3;
  c.segment_length = 2;
  c.total_steps = 3;
  const auto dir = scratch("nan");
  c.out_dir = dir.string();
  Networks nets = init_networks(make_model(ModelKind::SimpleCar), 0, c.scale);
  nets.gcbf.head.layers.back().bias.value(0, 0) = std::nan("");
  CHECK_THROWS_AS(train(c, nets), TrainingError);
  CHECK(std::filesystem::exists(dir / "nan_dump.ckpt"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("certificate statistics") {
  const DynamicsModel m = make_model(ModelKind::SimpleCar);
  const TrainConfig c = default_train_config(ModelKind::SimpleCar);
  const std::vector<TrainSample> samples = {pair_sample(m, 0.5), pair_sample(m, 0.08),
                                            pair_sample(m, 0.15)};
  const CertificateStats pos = certificate_stats(constant_h(m, 0.5), m, samples, c);
  CHECK(pos.n_safe == 2);
  CHECK(pos.n_unsafe == 2);
  CHECK(pos.safe_accuracy == 1.0);
  CHECK(pos.unsafe_accuracy == 0.0);
  CHECK(pos.balanced_accuracy == 0.5);
  CHECK(pos.deriv_violation == 0.0);
  const CertificateStats neg = certificate_stats(constant_h(m, -0.5), m, samples, c);
  CHECK(neg.unsafe_accuracy == 1.0);
  CHECK(neg.deriv_violation == 1.0);
}
