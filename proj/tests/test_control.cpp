// Copyright 2026 The isscon Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>

#include "isscon/control.hpp"
#include "test_util.hpp"

namespace isscon {
namespace {

using testing::random_mat;
using testing::random_params;
using testing::random_vec;

// --- controller law -----------------------------------------------------------------

TEST(ControlStep, FeedforwardAtZeroErrorBalancesPotential) {
  CounterRng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const ConMatrices c = random_params(rng, 3, 2).materialize();
    const Vec z_d = random_vec(rng, 3, -2.0, 2.0);
    const ControllerGains g = ControllerGains::uniform(3, 1.5, 2.0, 0.3, 1.0, ControlMode::PsatIDplusFF);
    const ControlOutput out = control_step(g, ControllerState::zeros(3), z_d, z_d, Vec::Zero(3), c, 0.01);
    Vec expected = c.K * z_d;
    for (int i = 0; i < 3; ++i) expected[i] += std::tanh(z_d[i] + c.b[i]);
    EXPECT_LT((out.tau - expected).cwiseAbs().maxCoeff(), 1e-14);
    // Static balance: the model's own acceleration vanishes at rest.
    const Vec force = out.tau - c.K * z_d - (z_d + c.b).array().tanh().matrix();
    EXPECT_LT(force.cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(ControlStep, PureProportional) {
  const ConMatrices c = ConParams::diagonal(2, 2, 1.0, 1.0, 1.0).materialize();
  ControllerGains g = ControllerGains::uniform(2, 0.0, 0.0, 0.0, 1.0, ControlMode::PsatID);
  g.Kp << 3.0, 0.5;
  Vec z_d(2), z(2);
  z_d << 1.0, -2.0;
  z << 0.25, 1.0;
  const ControlOutput out = control_step(g, ControllerState::zeros(2), z_d, z, Vec::Ones(2), c, 0.01);
  EXPECT_EQ(out.tau, g.Kp.cwiseProduct(z_d - z));
}

TEST(ControlStep, IntegralIncrementSaturates) {
  CounterRng rng(8);
  const ConMatrices c = random_params(rng, 4, 4).materialize();
  const ControllerGains g = ControllerGains::uniform(4, 0.0, 1.0, 0.0, 3.0, ControlMode::PsatID);
  ControllerState cs = ControllerState::zeros(4);
  const double dt = 0.01;
  for (int k = 0; k < 200; ++k) {
    const Vec z_d = random_vec(rng, 4, -1e3, 1e3);
    const ControlOutput out = control_step(g, cs, z_d, Vec::Zero(4), Vec::Zero(4), c, dt);
    EXPECT_LE((out.state.integral - cs.integral).cwiseAbs().maxCoeff(), dt * (1.0 + 1e-12));
    // Integral enters tau before it is updated.
    EXPECT_LT((out.tau - cs.integral).cwiseAbs().maxCoeff(), 1e-12);
    cs = out.state;
  }
}

TEST(ControlStep, RejectsBadArguments) {
  const ConMatrices c = ConParams::diagonal(2, 2, 1.0, 1.0, 1.0).materialize();
  const ControllerGains g = ControllerGains::psatid(2);
  EXPECT_THROW(control_step(g, ControllerState::zeros(2), Vec::Zero(3), Vec::Zero(2), Vec::Zero(2), c, 0.01),
               DimensionError);
  EXPECT_THROW(control_step(g, ControllerState::zeros(2), Vec::Zero(2), Vec::Zero(2), Vec::Zero(2), c, 0.0),
               PreconditionError);
  ControllerGains bad = g;
  bad.Ki[0] = -1.0;
  EXPECT_THROW(bad.validate(), ParameterError);
  bad = g;
  bad.upsilon = 0.0;
  EXPECT_THROW(bad.validate(), ParameterError);
}

// --- decoder ---------------------------------------------------------------------------

TEST(Decoder, IdentityPassesThrough) {
  CounterRng rng(1);
  const Vec tau = random_vec(rng, 5);
  EXPECT_LT((decode_forcing(Mat::Identity(5, 5), tau) - tau).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Decoder, SquareRoundTrip) {
  CounterRng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Mat B = random_mat(rng, 4, 4) + 2.0 * Mat::Identity(4, 4);
    const Vec tau = random_vec(rng, 4, -5.0, 5.0);
    EXPECT_LT((B * decode_forcing(B, tau) - tau).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Decoder, TallMatrixIsLeastSquaresOptimal) {
  CounterRng rng(4);
  const Mat B = random_mat(rng, 5, 2);
  const Vec tau = random_vec(rng, 5);
  const Vec u = decode_forcing(B, tau);
  const double best = (B * u - tau).norm();
  EXPECT_LT((B.transpose() * (B * u - tau)).norm(), 1e-12);
  for (int k = 0; k < 100; ++k) {
    EXPECT_LE(best, (B * (u + random_vec(rng, 2, -1e-3, 1e-3)) - tau).norm());
  }
}

TEST(Decoder, WideMatrixGivesMinimumNorm) {
  CounterRng rng(5);
  const Mat B = random_mat(rng, 2, 4);
  const Vec tau = random_vec(rng, 2);
  const Vec u = decode_forcing(B, tau);
  EXPECT_LT((B * u - tau).norm(), 1e-12);
  const Vec via_normal = B.transpose() * (B * B.transpose()).ldlt().solve(tau);
  EXPECT_LT((u - via_normal).norm(), 1e-12);
}

TEST(Decoder, RankDeficientThrowsWithCondition) {
  Mat B(3, 2);
  B << 1.0, 2.0, 2.0, 4.0, -1.0, -2.0;
  try {
    decode_forcing(B, Vec::Ones(3));
    FAIL() << "expected SingularityError";
  } catch (const SingularityError& e) {
    EXPECT_NE(std::string(e.what()).find("rank deficient"), std::string::npos);
  }
  EXPECT_THROW(decode_forcing(Mat::Zero(2, 2), Vec::Ones(2)), SingularityError);
  EXPECT_THROW(decode_forcing(Mat::Identity(2, 2), Vec::Ones(3)), DimensionError);
}

// --- closed loop -----------------------------------------------------------------------

ConParams actuated_diagonal(Eigen::Index n, double m_inv, double k, double d) {
  ConParams p = ConParams::diagonal(n, n, m_inv, k, d);
  p.B = Mat::Identity(n, n);
  return p;
}

TEST(SettlingTime, LastEntryIntoBand) {
  const std::vector<double> t{0.0, 1.0, 2.0, 3.0, 4.0};
  EXPECT_DOUBLE_EQ(settling_time(t, {1.0, 0.01, 0.5, 0.02, 0.0}, 0.05), 3.0);
  EXPECT_DOUBLE_EQ(settling_time(t, {0.0, 0.0, 0.0, 0.0, 0.0}, 0.05), 0.0);
  EXPECT_TRUE(std::isnan(settling_time(t, {1.0, 1.0, 1.0, 1.0, 1.0}, 0.05)));
  EXPECT_TRUE(std::isnan(settling_time({}, {}, 0.05)));
}

TEST(ClosedLoop, ZeroGainsRelaxOpenLoopRegardlessOfSetpoints) {
  const PlantModel plant(MassSpringParams{0.5, 2.0, 1.0});
  const ConParams model = actuated_diagonal(1, 1.0, 1.0, 1.0);
  const ControllerGains zero = ControllerGains::uniform(1, 0.0, 0.0, 0.0, 1.0, ControlMode::PsatID);
  ClosedLoopConfig cfg;
  cfg.setpoint_duration = 10.0;
  cfg.plant_integrator = {Method::RK4, 1e-3};
  Vec y0(2);
  y0 << 0.8, -0.3;
  const ClosedLoopResult a = closed_loop_run(plant, model, zero, {Vec::Constant(1, 2.0), Vec::Constant(1, -1.0)},
                                             y0, cfg);
  const ClosedLoopResult b = closed_loop_run(plant, model, zero, {Vec::Constant(1, 0.5), Vec::Constant(1, 3.0)},
                                             y0, cfg);
  ASSERT_FALSE(a.diverged);
  ASSERT_EQ(a.trajectory.size(), b.trajectory.size());
  EXPECT_EQ(a.trajectory.states, b.trajectory.states);
  for (const Vec& u : a.trajectory.inputs) EXPECT_EQ(u.norm(), 0.0);
  EXPECT_LT(a.trajectory.states.back().norm(), 1e-3);
  EXPECT_EQ(a.settling_times.size(), 2u);
}

TEST(ClosedLoop, EquilibriumSetpointWithFeedforward) {
  const PlantModel plant(PccParams{});
  const ObservationMap map = ObservationMap::for_pcc(plant.pcc());
  ConParams model = actuated_diagonal(2, 100.0, 1.0, 0.5);
  model.b << 0.3, -0.2;
  ClosedLoopConfig cfg;
  const ClosedLoopResult r = closed_loop_run(plant, model, ControllerGains::psatid_ff(2), {Vec::Zero(2)},
                                             Vec::Zero(4), cfg, map);
  ASSERT_FALSE(r.diverged) << r.failure;
  ASSERT_EQ(r.steady_state_errors.size(), 1u);
  EXPECT_LT(r.steady_state_errors[0], 1e-3);
}

TEST(ClosedLoop, TrackingOnMassSpringWithIntegralAction) {
  const PlantModel plant(MassSpringParams{0.5, 2.0, 1.0});
  const ConParams model = actuated_diagonal(1, 1.0, 1.0, 1.0);
  ClosedLoopConfig cfg;
  cfg.plant_integrator = {Method::RK4, 1e-3};
  const std::vector<Vec> sp{Vec::Constant(1, 0.5), Vec::Constant(1, -0.4)};
  for (const ControllerGains& g : {ControllerGains::psatid(1), ControllerGains::psatid_ff(1)}) {
    const ClosedLoopResult r = closed_loop_run(plant, model, g, sp, Vec::Zero(2), cfg);
    ASSERT_FALSE(r.diverged);
    for (double e : r.steady_state_errors) EXPECT_LT(e, 1e-2) << to_string(g.mode);
    for (double s : r.settling_times) EXPECT_TRUE(std::isfinite(s)) << to_string(g.mode);
    EXPECT_EQ(r.trajectory.size(), r.references.size());
    EXPECT_EQ(r.trajectory.size(), 2u * 2000u + 1u);
  }
}

TEST(ClosedLoop, DeterministicAndValidated) {
  const PlantModel plant(MassSpringParams{});
  const ConParams model = actuated_diagonal(1, 1.0, 1.0, 1.0);
  ClosedLoopConfig cfg;
  cfg.setpoint_duration = 2.0;
  cfg.plant_integrator = {Method::RK4, 1e-3};
  const std::vector<Vec> sp{Vec::Constant(1, 0.5)};
  const ClosedLoopResult a = closed_loop_run(plant, model, ControllerGains::psatid(1), sp, Vec::Zero(2), cfg);
  const ClosedLoopResult b = closed_loop_run(plant, model, ControllerGains::psatid(1), sp, Vec::Zero(2), cfg);
  EXPECT_EQ(to_csv(a.trajectory), to_csv(b.trajectory));
  EXPECT_EQ(a.rmse, b.rmse);
  cfg.setpoint_duration = 0.015;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(closed_loop_run(plant, ConParams::diagonal(2, 1, 1.0, 1.0, 1.0), ControllerGains::psatid(2), sp,
                               Vec::Zero(2), ClosedLoopConfig{}),
               DimensionError);
}

TEST(Setpoints, SeededAndBounded) {
  const std::vector<Vec> a = sample_setpoints(13, 7, 2, 5.0 * M_PI);
  const std::vector<Vec> b = sample_setpoints(13, 7, 2, 5.0 * M_PI);
  ASSERT_EQ(a.size(), 7u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i], b[i]);
    EXPECT_LE(a[i].cwiseAbs().maxCoeff(), 5.0 * M_PI);
  }
  EXPECT_NE(a[0], sample_setpoints(14, 1, 2, 5.0 * M_PI)[0]);
}

TEST(ExperimentConfig, GainsJsonAndValidation) {
  const ControllerGains g = gains_from_json({{"Kp", 2.0}, {"Kd", {0.1, 0.2}}}, 2, ControllerGains::psatid(2));
  EXPECT_EQ(g.Kp, Vec::Constant(2, 2.0));
  EXPECT_DOUBLE_EQ(g.Kd[1], 0.2);
  EXPECT_DOUBLE_EQ(g.Ki[0], 2.0);
  EXPECT_THROW(gains_from_json({{"Kp", -1.0}}, 2, ControllerGains::psatid(2)), ConfigError);
  EXPECT_THROW(gains_from_json({{"Kd", {0.1}}}, 2, ControllerGains::psatid(2)), ConfigError);
  ControlExperimentConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.psatid = ControllerGains::psatid(3);
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(ControlMetrics, JsonUsesNullForUnsettled) {
  ClosedLoopResult r;
  r.settling_times = {1.5, std::numeric_limits<double>::quiet_NaN()};
  r.steady_state_errors = {0.1, 0.2};
  const auto j = metrics_json(r);
  EXPECT_EQ(j["settling_times"][0], 1.5);
  EXPECT_TRUE(j["settling_times"][1].is_null());
  EXPECT_FALSE(j["diverged"].get<bool>());
}

}  // namespace
}  // namespace isscon
