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

// Model-based setpoint regulation: P-satI-D feedback with optional
// compensation of the CON potential, the forcing-to-input decoder and a
// sampled-data closed-loop harness around a plant.

#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "isscon/sysid.hpp"

namespace isscon {

enum class ControlMode { PsatID, PsatIDplusFF };

inline std::string to_string(ControlMode m) {
  return m == ControlMode::PsatID ? "P-satI-D" : "P-satI-D+FF";
}

struct ControllerGains {
  Vec Kp;
  Vec Ki;
  Vec Kd;
  double upsilon = 1.0;
  ControlMode mode = ControlMode::PsatID;

  static ControllerGains uniform(Eigen::Index n, double kp, double ki, double kd, double upsilon,
                                 ControlMode mode) {
    return {Vec::Constant(n, kp), Vec::Constant(n, ki), Vec::Constant(n, kd), upsilon, mode};
  }

  /// Kp = 1, Ki = 2, Kd = 0.02, upsilon = 1.
  static ControllerGains psatid(Eigen::Index n) {
    return uniform(n, 1.0, 2.0, 0.02, 1.0, ControlMode::PsatID);
  }

  /// Kp = 0, Ki = 2, Kd = 0.05, upsilon = 1, with potential compensation.
  static ControllerGains psatid_ff(Eigen::Index n) {
    return uniform(n, 0.0, 2.0, 0.05, 1.0, ControlMode::PsatIDplusFF);
  }

  Eigen::Index n() const { return Kp.size(); }

  void validate() const {
    require_dim(Ki.size(), Kp.size(), "Ki");
    require_dim(Kd.size(), Kp.size(), "Kd");
    if ((Kp.array() < 0.0).any() || (Ki.array() < 0.0).any() || (Kd.array() < 0.0).any()) {
      throw ParameterError("controller gains must be non-negative");
    }
    if (!(upsilon > 0.0)) throw ParameterError("upsilon must be positive");
  }
};

struct ControllerState {
  Vec integral;
  Vec last_tau;

  static ControllerState zeros(Eigen::Index n) { return {Vec::Zero(n), Vec::Zero(n)}; }
};

struct ControlOutput {
  Vec tau;
  ControllerState state;
};

/// K_w z_d + tanh(z_d + b): the forcing that holds the model at rest at z_d.
inline Vec potential_compensation(const ConMatrices& c, const Vec& z_d) {
  return c.K * z_d + (z_d + c.b).array().tanh().matrix();
}

/// tau = [K_w z_d + tanh(z_d + b)] (FF mode) + Kp (z_d - z) - Kd z_dot
///       + Ki integral, then integral += dt tanh(upsilon (z_d - z)).
inline ControlOutput control_step(const ControllerGains& g, const ControllerState& cs, const Vec& z_d,
                                  const Vec& z, const Vec& z_dot, const ConMatrices& c, double dt) {
  const Eigen::Index n = c.n();
  require_dim(g.n(), n, "controller gains");
  require_dim(z_d.size(), n, "setpoint");
  require_dim(z.size(), n, "state");
  require_dim(z_dot.size(), n, "velocity");
  require_dim(cs.integral.size(), n, "integral state");
  if (!(dt > 0.0)) throw PreconditionError("controller dt must be positive");
  const Vec e = z_d - z;
  Vec tau = g.Kp.cwiseProduct(e) - g.Kd.cwiseProduct(z_dot) + g.Ki.cwiseProduct(cs.integral);
  if (g.mode == ControlMode::PsatIDplusFF) tau += potential_compensation(c, z_d);
  ControlOutput out;
  out.state.integral = cs.integral + dt * (g.upsilon * e).array().tanh().matrix();
  out.state.last_tau = tau;
  out.tau = std::move(tau);
  return out;
}

/// Relative singular-value floor below which B counts as rank deficient.
inline constexpr double kDecoderRankTol = 1e-12;

/// u = B^+ tau by SVD; throws SingularityError for rank-deficient B.
inline Vec decode_forcing(const Mat& B, const Vec& tau) {
  require_dim(tau.size(), B.rows(), "forcing");
  if (B.size() == 0) throw SingularityError("decoder: empty input matrix", std::numeric_limits<double>::infinity());
  Eigen::JacobiSVD<Mat> svd(B, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& s = svd.singularValues();
  const double cond = s[s.size() - 1] > 0.0 ? s[0] / s[s.size() - 1] : std::numeric_limits<double>::infinity();
  if (!(s[s.size() - 1] > kDecoderRankTol * s[0])) {
    throw SingularityError("decoder: input matrix is rank deficient (condition " + format17(cond) + ")", cond);
  }
  const Vec inv = s.cwiseInverse();
  return svd.matrixV() * inv.asDiagonal() * (svd.matrixU().transpose() * tau);
}

// -----------------------------------------------------------------------------
// Closed loop
// -----------------------------------------------------------------------------

struct ClosedLoopConfig {
  /// Time spent on each setpoint.
  double setpoint_duration = 20.0;
  double control_rate = 100.0;
  /// Plant integration between controller ticks.
  IntegratorSpec plant_integrator{Method::RK4, 1e-4};
  /// Settling band as a fraction of the setpoint step.
  double band = 0.05;

  void validate() const {
    if (!(setpoint_duration > 0.0 && control_rate > 0.0)) throw ConfigError("closed-loop timing must be positive");
    if (!(band > 0.0)) throw ConfigError("settling band must be positive");
    plant_integrator.validate();
    const double ticks = setpoint_duration * control_rate;
    if (std::abs(ticks - std::round(ticks)) > 1e-9 * ticks) {
      throw ConfigError("setpoint duration must be a whole number of controller periods");
    }
  }
};

struct ClosedLoopResult {
  /// Plant state at every controller tick with the input applied from it.
  Trajectory trajectory;
  /// Setpoint active at each tick, plant coordinates.
  std::vector<Vec> references;
  /// Time from each setpoint switch until the error enters its band for
  /// good; NaN if the band is never held.
  std::vector<double> settling_times;
  /// Error norm at the end of each setpoint window.
  std::vector<double> steady_state_errors;
  double rmse = 0.0;
  bool diverged = false;
  std::string failure;
};

/// Settling time of a sampled error signal: time from t.front() to the
/// first sample after which the error stays within `band`.
inline double settling_time(const std::vector<double>& t, const std::vector<double>& err, double band) {
  if (t.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t k = err.size();
  while (k > 0 && err[k - 1] <= band) --k;
  if (k == err.size()) return std::numeric_limits<double>::quiet_NaN();
  return t[k] - t.front();
}

/// Runs the controller at control_rate against the plant, switching setpoints
/// (plant coordinates) every setpoint_duration. The plant state is mapped to
/// model coordinates, tau is decoded through B^+ and mapped back to a plant
/// input that is held until the next tick. Divergence stops the run and
/// keeps the partial trajectory.
inline ClosedLoopResult closed_loop_run(const PlantModel& plant, const ConParams& model,
                                        const ControllerGains& gains, const std::vector<Vec>& setpoints,
                                        const Vec& y0, const ClosedLoopConfig& cfg,
                                        const ObservationMap& map = {}) {
  cfg.validate();
  gains.validate();
  const ConMatrices c = model.materialize();
  const int n = plant.dof();
  require_dim(c.n(), n, "model dimension");
  require_dim(c.m(), plant.input_dim(), "model input dimension");
  require_dim(y0.size(), 2 * n, "initial plant state");
  for (const Vec& q : setpoints) require_dim(q.size(), n, "setpoint");

  const double dt = 1.0 / cfg.control_rate;
  const int ticks_per = static_cast<int>(std::llround(cfg.setpoint_duration * cfg.control_rate));
  auto field = [&plant](double, const Vec& y, const Vec& u) { return plant.field(y, u); };
  const int sub = detail::substeps(dt, cfg.plant_integrator.dt);
  const double h = dt / sub;

  ClosedLoopResult res;
  ControllerState cs = ControllerState::zeros(n);
  Vec y = y0;
  double t = 0.0;
  double sq = 0.0;
  std::size_t count = 0;
  for (std::size_t s = 0; s < setpoints.size() && !res.diverged; ++s) {
    const Vec& q_d = setpoints[s];
    const Vec z_d = map.to_model_position(q_d);
    const double step = (q_d - y.head(n)).norm();
    std::vector<double> times, errs;
    for (int k = 0; k < ticks_per; ++k) {
      const Vec z = map.to_model_state(y);
      const ControlOutput out = control_step(gains, cs, z_d, z.head(n), z.tail(n), c, dt);
      cs = out.state;
      const Vec u = map.to_plant_input(decode_forcing(c.B, out.tau));
      const double e = (y.head(n) - q_d).norm();
      res.trajectory.push(t, y, u);
      res.references.push_back(q_d);
      times.push_back(t);
      errs.push_back(e);
      sq += e * e;
      count += static_cast<std::size_t>(n);
      try {
        for (int j = 0; j < sub; ++j) {
          y = cfg.plant_integrator.method == Method::DoPri5
                  ? dopri5_fixed_step(field, t + j * h, y, u, h)
                  : step_fixed(field, t + j * h, y, u, h, cfg.plant_integrator.method);
          check_finite_state(y, y, t + (j + 1) * h);
        }
      } catch (const Error& ex) {
        res.diverged = true;
        res.failure = ex.what();
        break;
      }
      t = (static_cast<double>(s) * ticks_per + k + 1) * dt;
    }
    if (res.diverged) break;
    times.push_back(t);
    const double e_end = (y.head(n) - q_d).norm();
    errs.push_back(e_end);
    res.settling_times.push_back(settling_time(times, errs, cfg.band * step));
    res.steady_state_errors.push_back(e_end);
  }
  if (!res.diverged) {
    res.trajectory.push(t, y, res.trajectory.inputs.empty() ? Vec::Zero(n) : res.trajectory.inputs.back());
    res.references.push_back(setpoints.empty() ? Vec::Zero(n) : setpoints.back());
  }
  res.rmse = count == 0 ? 0.0 : std::sqrt(sq / static_cast<double>(count));
  return res;
}

/// Setpoints q_d ~ U(-bound, bound) per coordinate.
inline std::vector<Vec> sample_setpoints(std::uint64_t seed, int count, Eigen::Index n, double bound) {
  CounterRng rng(seed);
  std::vector<Vec> out;
  for (int s = 0; s < count; ++s) {
    Vec q(n);
    for (Eigen::Index i = 0; i < n; ++i) q[i] = rng.uniform(-bound, bound);
    out.push_back(q);
  }
  return out;
}

// -----------------------------------------------------------------------------
// End-to-end experiment
// -----------------------------------------------------------------------------

/// Data generation, fit and closed-loop evaluation of both controller modes
/// on a PCC plant. Every random stream derives from `seed`: dataset seed,
/// seed + 1 for the random part of the initial B, seed + 2 for the setpoints
/// and seed + 3 for minibatch shuffling.
struct ControlExperimentConfig {
  std::uint64_t seed = 11;
  PccParams plant;
  DatasetConfig data = default_data();
  FitConfig fit = default_fit();
  /// Initial M_w^-1 = init_inverse_mass I, K_w = I, D_w = 0.5 I.
  double init_inverse_mass = 100.0;
  /// Pre-fitted model; skips data generation and fitting when set.
  std::optional<ConParams> model;
  int setpoint_count = 7;
  ClosedLoopConfig loop;
  ControllerGains psatid = ControllerGains::psatid(2);
  ControllerGains psatid_ff = ControllerGains::psatid_ff(2);

  static DatasetConfig default_data() {
    DatasetConfig d;
    d.horizon = 0.5;
    d.sample_dt = 0.02;
    return d;
  }

  static FitConfig default_fit() {
    FitConfig f;
    f.integrator = {Method::RK4, 0.005};
    return f;
  }

  void validate() const {
    plant.validate();
    data.validate();
    fit.validate();
    loop.validate();
    psatid.validate();
    psatid_ff.validate();
    if (!(init_inverse_mass > 0.0)) throw ConfigError("init_inverse_mass must be positive");
    if (setpoint_count < 1) throw ConfigError("setpoint_count must be >= 1");
    const Eigen::Index n = plant.dof();
    if (psatid.Kp.size() != n || psatid_ff.Kp.size() != n) throw ConfigError("gain dimension differs from plant dof");
  }
};

struct ControlExperimentResult {
  ConParams model;
  double fit_test_rmse = 0.0;
  std::vector<Vec> setpoints;
  ClosedLoopResult psatid;
  ClosedLoopResult psatid_ff;
};

inline ControlExperimentResult run_control_experiment(
    const ControlExperimentConfig& cfg, const std::function<void(const std::string&)>& progress = {}) {
  cfg.validate();
  auto note = [&](const std::string& msg) {
    if (progress) progress(msg);
  };
  const PlantModel plant(cfg.plant);
  const PccRobot& robot = plant.pcc();
  const ObservationMap map = ObservationMap::for_pcc(robot);
  const Eigen::Index n = robot.dof();

  ControlExperimentResult res;
  if (cfg.model) {
    res.model = *cfg.model;
    res.fit_test_rmse = std::numeric_limits<double>::quiet_NaN();
  } else {
    note("generating dataset");
    const Dataset ds = generate_dataset(plant, cfg.data, cfg.seed, map);
    ConParams init = ConParams::diagonal(n, n, cfg.init_inverse_mass, 1.0, 0.5);
    init.B = initial_params(n, n, cfg.seed + 1).B;
    FitConfig fc = cfg.fit;
    fc.seed = cfg.seed + 3;
    note("fitting model");
    const FitResult fr = fit(ds, init, fc);
    res.model = fr.best;
    res.fit_test_rmse = position_rmse(fr.best, ds.select(Split::Test), fc.integrator);
  }
  res.setpoints = sample_setpoints(cfg.seed + 2, cfg.setpoint_count, n, robot.strain_bound()[0]);
  const Vec y0 = Vec::Zero(2 * n);
  note("closed loop " + to_string(cfg.psatid.mode));
  res.psatid = closed_loop_run(plant, res.model, cfg.psatid, res.setpoints, y0, cfg.loop, map);
  note("closed loop " + to_string(cfg.psatid_ff.mode));
  res.psatid_ff = closed_loop_run(plant, res.model, cfg.psatid_ff, res.setpoints, y0, cfg.loop, map);
  return res;
}

inline nlohmann::ordered_json metrics_json(const ClosedLoopResult& r) {
  auto num = [](double v) -> nlohmann::ordered_json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  nlohmann::ordered_json j;
  j["rmse"] = num(r.rmse);
  j["settling_times"] = nlohmann::ordered_json::array();
  for (double v : r.settling_times) j["settling_times"].push_back(num(v));
  j["steady_state_errors"] = nlohmann::ordered_json::array();
  for (double v : r.steady_state_errors) j["steady_state_errors"].push_back(num(v));
  j["diverged"] = r.diverged;
  if (r.diverged) j["failure"] = r.failure;
  return j;
}

inline ControllerGains gains_from_json(const nlohmann::json& j, Eigen::Index n, ControllerGains base) {
  try {
    auto read = [&](const char* key, Vec& v) {
      if (!j.contains(key)) return;
      if (j[key].is_number()) v = Vec::Constant(n, j[key].get<double>());
      else v = detail::read_vec(j, key);
    };
    read("Kp", base.Kp);
    read("Ki", base.Ki);
    read("Kd", base.Kd);
    base.upsilon = j.value("upsilon", base.upsilon);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("gains: ") + e.what());
  }
  try {
    base.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("gains: ") + e.what());
  }
  return base;
}

}  // namespace isscon
