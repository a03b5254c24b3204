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

// Time integration: explicit Euler, classical RK4, Dormand-Prince 5(4), the
// exact step of a forced damped oscillator and the closed-form approximate
// rollouts of a CON (general and underdamped-only variants).

#pragma once

#include <algorithm>
#include <functional>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "isscon/con.hpp"

namespace isscon {

enum class Method { Euler, RK4, DoPri5, CfaCon, CfaUdCon };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::Euler: return "euler";
    case Method::RK4: return "rk4";
    case Method::DoPri5: return "dopri5";
    case Method::CfaCon: return "cfa_con";
    case Method::CfaUdCon: return "cfa_udcon";
  }
  return "unknown";
}

inline Method method_from_string(const std::string& s) {
  if (s == "euler") return Method::Euler;
  if (s == "rk4") return Method::RK4;
  if (s == "dopri5") return Method::DoPri5;
  if (s == "cfa_con") return Method::CfaCon;
  if (s == "cfa_udcon") return Method::CfaUdCon;
  throw ConfigError("unknown integration method '" + s + "'");
}

struct IntegratorSpec {
  Method method = Method::RK4;
  /// Fixed step, or the initial step when adaptive.
  double dt = 1e-2;
  /// Only DoPri5 adapts its step.
  bool adaptive = false;
  double rtol = 1e-8;
  double atol = 1e-10;
  /// Clamp on |Delta lambda| near critical damping (closed-form methods).
  double eps_lambda = 1e-6;

  void validate() const {
    if (!(dt > 0.0)) throw ConfigError("integrator dt must be positive");
    if (adaptive && !(rtol > 0.0 && atol > 0.0)) throw ConfigError("rtol and atol must be positive");
    if (!(eps_lambda > 0.0)) throw ConfigError("eps_lambda must be positive");
  }
};

/// {"method", "dt", "adaptive", "rtol", "atol", "eps_lambda"}; omitted
/// fields keep the values of `base`.
inline IntegratorSpec integrator_spec_from_json(const nlohmann::json& j, IntegratorSpec base = {}) {
  if (!j.is_object()) throw ConfigError("integrator config must be a JSON object");
  try {
    if (j.contains("method")) base.method = method_from_string(j["method"].get<std::string>());
    base.dt = j.value("dt", base.dt);
    base.adaptive = j.value("adaptive", base.adaptive);
    base.rtol = j.value("rtol", base.rtol);
    base.atol = j.value("atol", base.atol);
    base.eps_lambda = j.value("eps_lambda", base.eps_lambda);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("integrator config: ") + e.what());
  }
  base.validate();
  return base;
}

// -----------------------------------------------------------------------------
// Trajectory
// -----------------------------------------------------------------------------

/// Uniformly sampled states [x; x_dot] with optional inputs held over each
/// sample interval.
struct Trajectory {
  std::vector<double> t;
  std::vector<Vec> states;
  std::vector<Vec> inputs;

  std::size_t size() const { return t.size(); }
  Eigen::Index n() const { return states.empty() ? 0 : states.front().size() / 2; }
  Eigen::Index m() const { return inputs.empty() ? 0 : inputs.front().size(); }
  double sample_dt() const { return t.size() < 2 ? 0.0 : t[1] - t[0]; }

  void push(double time, Vec state, Vec input = {}) {
    t.push_back(time);
    states.push_back(std::move(state));
    if (input.size() > 0) inputs.push_back(std::move(input));
  }

  /// Sample grid is uniform within `tol`.
  bool is_uniform(double tol = 1e-12) const {
    if (t.size() < 3) return true;
    const double h = t[1] - t[0];
    for (std::size_t k = 1; k < t.size(); ++k) {
      if (std::abs((t[k] - t[k - 1]) - h) > tol * std::max(1.0, std::abs(t[k]))) return false;
    }
    return true;
  }

  void validate() const {
    if (states.size() != t.size()) throw DimensionError("trajectory: times and states differ in length");
    if (!inputs.empty() && inputs.size() != t.size()) {
      throw DimensionError("trajectory: inputs and states differ in length");
    }
    for (std::size_t k = 1; k < t.size(); ++k) {
      if (!(t[k] > t[k - 1])) throw DimensionError("trajectory: time grid not strictly increasing");
    }
  }
};

/// Header t,x1..xn,xd1..xdn[,u1..um]; 17 significant digits; LF endings.
inline void write_csv(std::ostream& os, const Trajectory& traj) {
  const Eigen::Index n = traj.n();
  const Eigen::Index m = traj.m();
  os << 't';
  for (Eigen::Index i = 1; i <= n; ++i) os << ",x" << i;
  for (Eigen::Index i = 1; i <= n; ++i) os << ",xd" << i;
  for (Eigen::Index i = 1; i <= m; ++i) os << ",u" << i;
  os << '\n';
  for (std::size_t k = 0; k < traj.size(); ++k) {
    os << format17(traj.t[k]);
    for (Eigen::Index i = 0; i < 2 * n; ++i) os << ',' << format17(traj.states[k][i]);
    for (Eigen::Index i = 0; i < m; ++i) os << ',' << format17(traj.inputs[k][i]);
    os << '\n';
  }
}

inline std::string to_csv(const Trajectory& traj) {
  std::ostringstream os;
  write_csv(os, traj);
  return os.str();
}

inline Trajectory read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("trajectory CSV: empty input");
  Eigen::Index n = 0, m = 0;
  {
    std::stringstream header(line);
    std::string col;
    std::getline(header, col, ',');
    if (col != "t") throw ConfigError("trajectory CSV: first column must be 't'");
    while (std::getline(header, col, ',')) {
      if (col.rfind("xd", 0) == 0) continue;
      if (col[0] == 'x') ++n;
      else if (col[0] == 'u') ++m;
      else throw ConfigError("trajectory CSV: unexpected column '" + col + "'");
    }
  }
  Trajectory traj;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (static_cast<Eigen::Index>(vals.size()) != 1 + 2 * n + m) {
      throw ConfigError("trajectory CSV: wrong column count on line " + std::to_string(row));
    }
    Vec y = Eigen::Map<const Vec>(vals.data() + 1, 2 * n);
    Vec u = Eigen::Map<const Vec>(vals.data() + 1 + 2 * n, m);
    traj.push(vals[0], std::move(y), std::move(u));
  }
  traj.validate();
  return traj;
}

// -----------------------------------------------------------------------------
// Fixed-step explicit methods
// -----------------------------------------------------------------------------

inline void check_finite_state(const Vec& y_new, const Vec& y_old, double t) {
  if (!y_new.allFinite()) {
    throw DivergenceError("integration diverged at t = " + format17(t), t, y_old);
  }
}

/// One explicit step with the input held constant over [t, t + dt].
/// `field(t, y, u)` returns dy/dt.
template <class Field>
Vec step_fixed(const Field& field, double t, const Vec& y, const Vec& u, double dt, Method method) {
  if (!(dt > 0.0)) throw PreconditionError("step size must be positive");
  Vec out;
  switch (method) {
    case Method::Euler:
      out = y + dt * field(t, y, u);
      break;
    case Method::RK4: {
      const Vec k1 = field(t, y, u);
      const Vec k2 = field(t + 0.5 * dt, y + 0.5 * dt * k1, u);
      const Vec k3 = field(t + 0.5 * dt, y + 0.5 * dt * k2, u);
      const Vec k4 = field(t + dt, y + dt * k3, u);
      out = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      break;
    }
    default:
      throw PreconditionError("step_fixed supports Euler and RK4 only");
  }
  check_finite_state(out, y, t + dt);
  return out;
}

// -----------------------------------------------------------------------------
// Dormand-Prince 5(4)
// -----------------------------------------------------------------------------

namespace dopri {
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
inline constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                        b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// b - b_hat (fifth minus embedded fourth order weights).
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

inline constexpr double kSafety = 0.9;
inline constexpr double kMinFactor = 0.2;
inline constexpr double kMaxFactor = 5.0;
inline constexpr double kMinStep = 1e-14;
// PI exponents (Hairer & Wanner, beta = 0.04).
inline constexpr double kAlpha = 0.2 - 0.75 * 0.04;
inline constexpr double kBeta = 0.04;
}  // namespace dopri

/// Fifth-order solution and error vector of one Dormand-Prince stage sweep.
template <class Field>
void dopri5_stages(const Field& field, double t, const Vec& y, const Vec& u, double h, Vec& y5,
                   Vec* err) {
  using namespace dopri;
  const Vec k1 = field(t, y, u);
  const Vec k2 = field(t + c2 * h, y + h * (a21 * k1), u);
  const Vec k3 = field(t + c3 * h, y + h * (a31 * k1 + a32 * k2), u);
  const Vec k4 = field(t + c4 * h, y + h * (a41 * k1 + a42 * k2 + a43 * k3), u);
  const Vec k5 = field(t + c5 * h, y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4), u);
  const Vec k6 =
      field(t + h, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5), u);
  y5 = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
  if (err != nullptr) {
    const Vec k7 = field(t + h, y5, u);
    *err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
  }
}

/// Non-adaptive Dormand-Prince step (fifth-order solution).
template <class Field>
Vec dopri5_fixed_step(const Field& field, double t, const Vec& y, const Vec& u, double dt) {
  Vec y5;
  dopri5_stages(field, t, y, u, dt, y5, nullptr);
  check_finite_state(y5, y, t + dt);
  return y5;
}

struct Dopri5Step {
  Vec y;
  double dt_taken = 0.0;
  double dt_next = 0.0;
  /// Mixed RMS error norm of the accepted step (<= 1).
  double error = 0.0;
  int rejections = 0;
};

/// Mixed absolute/relative RMS norm used for step acceptance.
inline double dopri5_error_norm(const Vec& err, const Vec& y0, const Vec& y1, double rtol, double atol) {
  const Eigen::ArrayXd scale = atol + rtol * y0.array().abs().max(y1.array().abs());
  return std::sqrt((err.array() / scale).square().mean());
}

/// One accepted adaptive step starting from `dt_suggest`; rejected attempts
/// shrink the step. `prev_error` feeds the PI controller.
template <class Field>
Dopri5Step step_dopri5(const Field& field, double t, const Vec& y, const Vec& u, double dt_suggest,
                       double rtol, double atol, double prev_error = 1e-4) {
  using namespace dopri;
  if (!(rtol > 0.0 && atol > 0.0)) throw PreconditionError("DoPri5 tolerances must be positive");
  if (!(dt_suggest > 0.0)) throw PreconditionError("step size must be positive");
  Dopri5Step out;
  double h = dt_suggest;
  Vec y5, err;
  for (;;) {
    if (h < kMinStep) {
      throw DivergenceError("DoPri5 step size underflow at t = " + format17(t), t, y);
    }
    dopri5_stages(field, t, y, u, h, y5, &err);
    double e = y5.allFinite() ? dopri5_error_norm(err, y, y5, rtol, atol)
                              : std::numeric_limits<double>::infinity();
    if (!std::isfinite(e)) {
      h *= kMinFactor;
      ++out.rejections;
      continue;
    }
    if (e <= 1.0) {
      const double ee = std::max(e, 1e-10);
      double fac = kSafety * std::pow(ee, -kAlpha) * std::pow(std::max(prev_error, 1e-4), kBeta);
      fac = std::clamp(fac, kMinFactor, kMaxFactor);
      if (out.rejections > 0) fac = std::min(fac, 1.0);
      out.y = std::move(y5);
      out.dt_taken = h;
      out.dt_next = h * fac;
      out.error = e;
      return out;
    }
    const double fac = std::max(kMinFactor, kSafety * std::pow(e, -0.2));
    h *= fac;
    ++out.rejections;
  }
}

// -----------------------------------------------------------------------------
// Closed-form damped oscillator
// -----------------------------------------------------------------------------

/// Per-oscillator characteristics of mass .* x_ddot = F - kappa x - d x_dot.
struct OscillatorDecomposition {
  Vec kappa;
  Vec d;
  Vec mass;
  Vec omega_n;
  Vec zeta;
  Vec alpha;
  /// omega_n sqrt(|1 - zeta^2|), floored at eps_lambda / 2.
  Vec beta;
  /// zeta > 1 and |Delta lambda| >= eps_lambda: hyperbolic branch.
  Eigen::Array<bool, Eigen::Dynamic, 1> overdamped;

  Eigen::Index n() const { return kappa.size(); }

  static OscillatorDecomposition from(const Vec& kappa, const Vec& d, const Vec& mass = {},
                                      double eps_lambda = 1e-6) {
    const Eigen::Index n = kappa.size();
    require_dim(d.size(), n, "damping");
    OscillatorDecomposition dec;
    dec.kappa = kappa;
    dec.d = d;
    dec.mass = mass.size() == 0 ? Vec::Ones(n) : mass;
    require_dim(dec.mass.size(), n, "mass");
    dec.omega_n.resize(n);
    dec.zeta.resize(n);
    dec.alpha.resize(n);
    dec.beta.resize(n);
    dec.overdamped.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(kappa[i] > 0.0)) throw ParameterError("oscillator stiffness must be positive");
      if (!(dec.mass[i] > 0.0)) throw ParameterError("oscillator mass must be positive");
      if (!(d[i] >= 0.0)) throw ParameterError("oscillator damping must be non-negative");
      const double w = std::sqrt(kappa[i] / dec.mass[i]);
      const double z = d[i] / (2.0 * std::sqrt(kappa[i] * dec.mass[i]));
      dec.omega_n[i] = w;
      dec.zeta[i] = z;
      dec.alpha[i] = z * w;
      const double b = w * std::sqrt(std::abs(1.0 - z * z));
      if (2.0 * b < eps_lambda) {
        dec.beta[i] = 0.5 * eps_lambda;
        dec.overdamped[i] = false;
      } else {
        dec.beta[i] = b;
        dec.overdamped[i] = z > 1.0;
      }
    }
    return dec;
  }
};

/// Exact flow of each decoupled oscillator under constant forcing F over dt
/// (real trigonometric form for zeta < 1, hyperbolic form for zeta > 1).
inline SystemState closed_form_osc_step(const OscillatorDecomposition& dec, const Vec& x,
                                        const Vec& x_dot, const Vec& F, double dt) {
  const Eigen::Index n = dec.n();
  require_dim(x.size(), n, "position");
  require_dim(x_dot.size(), n, "velocity");
  require_dim(F.size(), n, "forcing");
  SystemState out{Vec(n), Vec(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x_eq = F[i] / dec.kappa[i];
    const double c1 = x[i] - x_eq;
    const double a = dec.alpha[i];
    const double b = dec.beta[i];
    const double s = x_dot[i] + a * c1;
    if (dec.overdamped[i]) {
      const double e1 = std::exp((-a + b) * dt);
      const double e2 = std::exp((-a - b) * dt);
      const double ch = 0.5 * (e1 + e2);
      const double sh = 0.5 * (e1 - e2);
      out.x[i] = c1 * ch + (s / b) * sh + x_eq;
      out.x_dot[i] = (s - c1 * a) * ch + (c1 * b - s * a / b) * sh;
    } else {
      const double e = std::exp(-a * dt);
      const double co = std::cos(b * dt);
      const double si = std::sin(b * dt);
      const double c2 = s / b;
      out.x[i] = (c1 * co + c2 * si) * e + x_eq;
      out.x_dot[i] = -((c1 * a - c2 * b) * co + (c1 * b + c2 * a) * si) * e;
    }
  }
  return out;
}

// -----------------------------------------------------------------------------
// Closed-form approximation of CON rollouts
// -----------------------------------------------------------------------------

namespace detail {

/// Diagonal/off-diagonal split of the linear part of an original-chart CON.
struct CfaSplit {
  OscillatorDecomposition dec;
  Mat K_off;
  Mat D_off;
  bool coupled_K = false;
  bool coupled_D = false;

  CfaSplit(const OriginalConParams& p, double eps_lambda) {
    const Vec kappa = p.K.diagonal();
    const Vec d = p.D.diagonal();
    dec = OscillatorDecomposition::from(kappa, d, p.masses(), eps_lambda);
    K_off = p.K;
    K_off.diagonal().setZero();
    D_off = p.D;
    D_off.diagonal().setZero();
    coupled_K = !K_off.isZero(0.0);
    coupled_D = !D_off.isZero(0.0);
  }

  /// F(t_k) = g(u) - (K - kappa) x - (D - d) x_dot - tanh(W x + b), written
  /// into `f` without allocating.
  void forcing(const OriginalConParams& p, const Vec& x, const Vec& xd, const Vec& u, Vec& f) const {
    f.noalias() = p.W * x;
    f += p.b;
    f = -f.array().tanh().matrix();
    if (coupled_K) f.noalias() -= K_off * x;
    if (coupled_D) f.noalias() -= D_off * xd;
    if (p.m() > 0 && u.size() > 0) f.noalias() += p.B * u;
  }

  Vec forcing(const OriginalConParams& p, const Vec& x, const Vec& xd, const Vec& u) const {
    Vec f(p.n());
    forcing(p, x, xd, u, f);
    return f;
  }
};

inline const Vec& input_at(std::span<const Vec> inputs, std::size_t k, const Vec& zero) {
  return inputs.empty() ? zero : inputs[k];
}

inline void check_rollout_args(const OriginalConParams& p, const Vec& y0,
                               std::span<const Vec> inputs, double dt, int steps) {
  require_dim(y0.size(), 2 * p.n(), "initial state");
  if (!(dt > 0.0)) throw PreconditionError("step size must be positive");
  if (steps < 0) throw PreconditionError("number of steps must be non-negative");
  if (!inputs.empty() && static_cast<int>(inputs.size()) < steps) {
    throw DimensionError("input sequence shorter than the number of steps");
  }
}

}  // namespace detail

/// Closed-form approximate rollout: per step the coupled nonlinear residual is
/// frozen as constant forcing and the decoupled linear oscillators are
/// advanced exactly. Returns steps + 1 states on the grid t_k = k dt.
inline Trajectory cfa_con_rollout(const OriginalConParams& p, const Vec& y0,
                                  std::span<const Vec> inputs, double dt, int steps,
                                  double eps_lambda = 1e-6) {
  detail::check_rollout_args(p, y0, inputs, dt, steps);
  const Eigen::Index n = p.n();
  const detail::CfaSplit split(p, eps_lambda);
  const Vec zero_u = Vec::Zero(p.m());
  Trajectory traj;
  traj.t.reserve(steps + 1);
  traj.states.reserve(steps + 1);
  Vec x = y0.head(n);
  Vec xd = y0.tail(n);
  traj.push(0.0, y0);
  const auto& dec = split.dec;
  Vec F(n);
  for (int k = 0; k < steps; ++k) {
    split.forcing(p, x, xd, detail::input_at(inputs, k, zero_u), F);
    // Same per-oscillator flow as closed_form_osc_step, evaluated in place.
    for (Eigen::Index i = 0; i < n; ++i) {
      const double x_eq = F[i] / dec.kappa[i];
      const double c1 = x[i] - x_eq;
      const double a = dec.alpha[i];
      const double b = dec.beta[i];
      const double s = xd[i] + a * c1;
      if (dec.overdamped[i]) {
        const double e1 = std::exp((-a + b) * dt);
        const double e2 = std::exp((-a - b) * dt);
        const double ch = 0.5 * (e1 + e2);
        const double sh = 0.5 * (e1 - e2);
        x[i] = c1 * ch + (s / b) * sh + x_eq;
        xd[i] = (s - c1 * a) * ch + (c1 * b - s * a / b) * sh;
      } else {
        const double e = std::exp(-a * dt);
        const double co = std::cos(b * dt);
        const double si = std::sin(b * dt);
        const double c2 = s / b;
        x[i] = (c1 * co + c2 * si) * e + x_eq;
        xd[i] = -((c1 * a - c2 * b) * co + (c1 * b + c2 * a) * si) * e;
      }
    }
    if (!x.allFinite() || !xd.allFinite()) {
      throw DivergenceError("CFA-CON rollout diverged at step " + std::to_string(k + 1),
                            (k + 1) * dt, traj.states.back());
    }
    Vec y(2 * n);
    y << x, xd;
    traj.push((k + 1) * dt, std::move(y));
  }
  if (!inputs.empty()) traj.inputs.assign(inputs.begin(), inputs.begin() + steps + (static_cast<int>(inputs.size()) > steps ? 1 : 0));
  if (!traj.inputs.empty() && traj.inputs.size() != traj.t.size()) traj.inputs.clear();
  return traj;
}

/// Underdamped-only variant: the per-oscillator 2x2 propagator and forced
/// response are precomputed once, so each step is real multiply-adds plus
/// the nonlinear forcing. Requires zeta_i < 1 for every oscillator.
inline Trajectory cfa_udcon_rollout(const OriginalConParams& p, const Vec& y0,
                                    std::span<const Vec> inputs, double dt, int steps,
                                    double eps_lambda = 1e-6) {
  detail::check_rollout_args(p, y0, inputs, dt, steps);
  const Eigen::Index n = p.n();
  const detail::CfaSplit split(p, eps_lambda);
  const auto& dec = split.dec;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(dec.zeta[i] < 1.0)) {
      throw PreconditionError("CFA-UDCON requires underdamped oscillators (zeta_" +
                              std::to_string(i) + " = " + format17(dec.zeta[i]) + ")");
    }
  }
  // x' = F/kappa + a11 c1 + a12 x_dot,  x_dot' = a21 c1 + a22 x_dot,  c1 = x - F/kappa.
  Eigen::ArrayXd a11(n), a12(n), a21(n), a22(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = dec.alpha[i];
    const double b = dec.beta[i];
    const double e = std::exp(-a * dt);
    const double co = std::cos(b * dt);
    const double si = std::sin(b * dt);
    a11[i] = e * (co + a * si / b);
    a12[i] = e * si / b;
    a21[i] = -e * si * (a * a + b * b) / b;
    a22[i] = e * (co - a * si / b);
  }
  const Eigen::ArrayXd inv_kappa = dec.kappa.array().inverse();
  const Vec zero_u = Vec::Zero(p.m());
  Trajectory traj;
  traj.t.reserve(steps + 1);
  traj.states.reserve(steps + 1);
  Vec x = y0.head(n);
  Vec xd = y0.tail(n);
  traj.push(0.0, y0);
  Vec F(n);
  for (int k = 0; k < steps; ++k) {
    split.forcing(p, x, xd, detail::input_at(inputs, k, zero_u), F);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double x_eq = F[i] * inv_kappa[i];
      const double c1 = x[i] - x_eq;
      const double v = xd[i];
      x[i] = x_eq + a11[i] * c1 + a12[i] * v;
      xd[i] = a21[i] * c1 + a22[i] * v;
    }
    if (!x.allFinite() || !xd.allFinite()) {
      throw DivergenceError("CFA-UDCON rollout diverged at step " + std::to_string(k + 1),
                            (k + 1) * dt, traj.states.back());
    }
    Vec y(2 * n);
    y << x, xd;
    traj.push((k + 1) * dt, std::move(y));
  }
  if (!inputs.empty()) traj.inputs.assign(inputs.begin(), inputs.begin() + steps + (static_cast<int>(inputs.size()) > steps ? 1 : 0));
  if (!traj.inputs.empty() && traj.inputs.size() != traj.t.size()) traj.inputs.clear();
  return traj;
}

// -----------------------------------------------------------------------------
// Sampled rollouts
// -----------------------------------------------------------------------------

using InputSignal = std::function<Vec(double)>;

namespace detail {

inline int sample_count(double t0, double t1, double sample_dt) {
  if (!(t1 > t0)) throw PreconditionError("rollout needs t1 > t0");
  if (!(sample_dt > 0.0)) throw PreconditionError("sample_dt must be positive");
  const double r = (t1 - t0) / sample_dt;
  const int k = static_cast<int>(std::llround(r));
  if (std::abs(r - k) > 1e-9 * std::max(1.0, r)) {
    throw PreconditionError("horizon is not a whole number of sample intervals");
  }
  return k;
}

inline int substeps(double sample_dt, double dt) {
  if (!(sample_dt >= dt * (1.0 - 1e-12))) throw PreconditionError("sample_dt must be >= internal dt");
  return std::max(1, static_cast<int>(std::ceil(sample_dt / dt - 1e-9)));
}

}  // namespace detail

/// Integrates `field(t, y, u)` from t0 to t1 and records the state every
/// sample_dt. Euler, RK4 and fixed-step DoPri5 use substeps of at most
/// spec.dt; adaptive DoPri5 lands exactly on every sample time. The input is
/// zero-order held over each integrator step.
template <class Field>
Trajectory rollout(const IntegratorSpec& spec, const Field& field, const Vec& y0,
                   const InputSignal& u_of_t, double t0, double t1, double sample_dt) {
  spec.validate();
  if (spec.method == Method::CfaCon || spec.method == Method::CfaUdCon) {
    throw PreconditionError("closed-form methods need the network parameters, not a vector field");
  }
  const int samples = detail::sample_count(t0, t1, sample_dt);
  const Vec no_input;
  auto input = [&](double t) -> Vec { return u_of_t ? u_of_t(t) : no_input; };

  Trajectory traj;
  traj.t.reserve(samples + 1);
  traj.states.reserve(samples + 1);
  Vec y = y0;
  traj.push(t0, y, input(t0));
  const bool adaptive = spec.method == Method::DoPri5 && spec.adaptive;
  const int sub = adaptive ? 1 : detail::substeps(sample_dt, spec.dt);
  const double h = sample_dt / sub;
  double dt_next = spec.dt;
  double prev_err = 1e-4;
  for (int k = 0; k < samples; ++k) {
    const double ta = t0 + k * sample_dt;
    const double tb = t0 + (k + 1) * sample_dt;
    if (adaptive) {
      double t = ta;
      while (t < tb) {
        const double remaining = tb - t;
        const bool last = dt_next >= remaining * (1.0 - 1e-12);
        const double try_dt = last ? remaining : dt_next;
        Dopri5Step st = step_dopri5(field, t, y, input(t), try_dt, spec.rtol, spec.atol, prev_err);
        y = std::move(st.y);
        prev_err = std::max(st.error, 1e-4);
        const bool hit = last && st.rejections == 0;
        t = hit ? tb : t + st.dt_taken;
        if (!hit || st.dt_next > dt_next) dt_next = st.dt_next;
      }
    } else {
      for (int s = 0; s < sub; ++s) {
        const double t = ta + s * h;
        const Vec u = input(t);
        y = spec.method == Method::DoPri5 ? dopri5_fixed_step(field, t, y, u, h)
                                          : step_fixed(field, t, y, u, h, spec.method);
      }
    }
    traj.push(tb, y, input(tb));
  }
  if (!traj.inputs.empty() && traj.inputs.size() != traj.t.size()) traj.inputs.clear();
  return traj;
}

/// Rollout of an original-chart network with any of the five methods. The
/// closed-form methods run at spec.dt and are subsampled to sample_dt.
inline Trajectory rollout(const IntegratorSpec& spec, const OriginalConParams& p, const Vec& y0,
                          const InputSignal& u_of_t, double t0, double t1, double sample_dt) {
  if (spec.method != Method::CfaCon && spec.method != Method::CfaUdCon) {
    auto field = [&p](double, const Vec& y, const Vec& u) {
      return field_original(p, y, u.size() == 0 ? Vec::Zero(p.m()) : u);
    };
    return rollout(spec, field, y0, u_of_t, t0, t1, sample_dt);
  }
  spec.validate();
  const int samples = detail::sample_count(t0, t1, sample_dt);
  const int sub = detail::substeps(sample_dt, spec.dt);
  const double h = sample_dt / sub;
  const int steps = samples * sub;
  std::vector<Vec> inputs;
  if (u_of_t && p.m() > 0) {
    inputs.reserve(steps + 1);
    for (int k = 0; k <= steps; ++k) inputs.push_back(u_of_t(t0 + k * h));
  }
  Trajectory fine = spec.method == Method::CfaCon
                        ? cfa_con_rollout(p, y0, inputs, h, steps, spec.eps_lambda)
                        : cfa_udcon_rollout(p, y0, inputs, h, steps, spec.eps_lambda);
  Trajectory traj;
  for (int k = 0; k <= samples; ++k) {
    const std::size_t idx = static_cast<std::size_t>(k) * sub;
    traj.push(t0 + k * sample_dt, fine.states[idx], inputs.empty() ? Vec() : inputs[idx]);
  }
  return traj;
}

}  // namespace isscon
