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

// Integrator benchmark on randomly sampled mass-weighted networks: accuracy
// against a fine reference solution and single-threaded throughput.

#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "isscon/integrators.hpp"

namespace isscon {

/// One benchmark network with its initial state.
struct NetworkSample {
  std::uint64_t seed = 0;
  Eigen::Index n = 0;
  bool underdamped_only = false;
  OriginalConParams params;
  Vec omega_n;
  Vec zeta;
  Vec y0;
};

/// Deterministic per seed. Per oscillator i, in draw order: omega_n,i ~
/// U(0.05, 0.5) used directly as the natural frequency, k_i ~ U(0.2, 2),
/// zeta_i ~ U(0.1, 0.9) or U(0.1, 2.0); then m_i = k_i / omega_n,i^2 and
/// d_i = 2 zeta_i sqrt(m_i k_i). W is materialized from a raw triangular
/// factor with diagonal entries U(-1, 1) and off-diagonal entries
/// U(-1, 1) / sqrt(n); then b ~ U(-1, 1)^n and y0 ~ U(-1, 1)^2n.
inline NetworkSample sample_network(std::uint64_t seed, Eigen::Index n, bool underdamped_only) {
  if (n < 1) throw ParameterError("network size must be positive");
  CounterRng rng(seed);
  NetworkSample s;
  s.seed = seed;
  s.n = n;
  s.underdamped_only = underdamped_only;
  s.omega_n.resize(n);
  s.zeta.resize(n);
  Vec k(n), m(n), d(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    s.omega_n[i] = rng.uniform(0.05, 0.5);
    k[i] = rng.uniform(0.2, 2.0);
    s.zeta[i] = underdamped_only ? rng.uniform(0.1, 0.9) : rng.uniform(0.1, 2.0);
    m[i] = k[i] / (s.omega_n[i] * s.omega_n[i]);
    d[i] = 2.0 * s.zeta[i] * std::sqrt(m[i] * k[i]);
  }
  const double off = 1.0 / std::sqrt(static_cast<double>(n));
  Vec factor(triangular_size(n));
  Eigen::Index idx = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) factor[idx++] = rng.uniform(-1.0, 1.0) * (i == j ? 1.0 : off);
  OriginalConParams& p = s.params;
  p.K = k.asDiagonal();
  p.D = d.asDiagonal();
  p.W = materialize(factor, n);
  p.b.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) p.b[i] = rng.uniform(-1.0, 1.0);
  p.B = Mat(n, 0);
  p.mass = m;
  s.y0.resize(2 * n);
  for (Eigen::Index i = 0; i < 2 * n; ++i) s.y0[i] = rng.uniform(-1.0, 1.0);
  return s;
}

struct BenchMethod {
  std::string name;
  IntegratorSpec spec;
  /// Runs on the underdamped set instead of the general set.
  bool underdamped_set = false;
};

/// high_order = fixed-step Dormand-Prince at 0.1 s; euler at 0.05 s; the
/// closed-form methods at 0.1 s (cfa_udcon on the underdamped set).
inline std::vector<BenchMethod> default_bench_methods() {
  return {{"high_order", {Method::DoPri5, 0.1}, false},
          {"euler", {Method::Euler, 0.05}, false},
          {"cfa_con", {Method::CfaCon, 0.1}, false},
          {"cfa_udcon", {Method::CfaUdCon, 0.1}, true}};
}

struct BenchConfig {
  int n_configs = 100;
  Eigen::Index n = 50;
  double horizon = 60.0;
  double sample_dt = 0.1;
  double reference_dt = 5e-4;
  std::uint64_t seed = 0;
  std::vector<BenchMethod> methods = default_bench_methods();
  int throughput_repeats = 10;

  void validate() const {
    if (n_configs < 1 || n < 1) throw ConfigError("bench needs at least one configuration and oscillator");
    if (!(horizon > 0.0 && sample_dt > 0.0 && reference_dt > 0.0)) throw ConfigError("bench times must be positive");
    if (throughput_repeats < 1) throw ConfigError("throughput repeats must be >= 1");
    for (const BenchMethod& m : methods) m.spec.validate();
  }

  /// Seed of configuration i; the underdamped set uses its own stream.
  std::uint64_t config_seed(int i, bool underdamped) const {
    return seed * 1000003ULL + static_cast<std::uint64_t>(i) + (underdamped ? 500000ULL : 0ULL);
  }
};

struct BenchRow {
  std::string method;
  std::uint64_t config_seed = 0;
  double rmse = 0.0;
  bool diverged = false;
  double steps_per_sec = 0.0;
};

struct MethodSummary {
  std::string name;
  double dt = 0.0;
  bool underdamped_set = false;
  double rmse_mean = 0.0;
  double rmse_std = 0.0;
  int diverged = 0;
  int runs = 0;
  /// Min-of-repeats throughput on the first configuration of the method's set.
  double steps_per_sec = 0.0;
  double sim_real_factor = 0.0;
};

struct BenchReport {
  BenchConfig config;
  std::vector<BenchRow> rows;
  std::vector<MethodSummary> methods;
  /// Largest |cfa_udcon - cfa_con| state difference on the underdamped set.
  double udcon_cfa_max_diff = 0.0;
  /// CFA-CON throughput on the network where cfa_udcon is timed, so the two
  /// closed-form methods compare on identical work; 0 without both methods.
  double cfa_con_underdamped_steps_per_sec = 0.0;

  const MethodSummary& method(const std::string& name) const {
    for (const MethodSummary& m : methods)
      if (m.name == name) return m;
    throw PreconditionError("no method '" + name + "' in bench report");
  }
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// RMSE over positions and samples 1..N against the reference.
inline double position_rmse(const Trajectory& a, const Trajectory& ref, Eigen::Index n) {
  double acc = 0.0;
  for (std::size_t k = 1; k < ref.size(); ++k) acc += (a.states[k] - ref.states[k]).head(n).squaredNorm();
  const double count = static_cast<double>(n) * static_cast<double>(ref.size() - 1);
  return std::sqrt(acc / count);
}

inline double steps_of(const IntegratorSpec& spec, double horizon) { return std::round(horizon / spec.dt); }

}  // namespace detail

inline Trajectory bench_rollout(const NetworkSample& s, const IntegratorSpec& spec, double horizon,
                                double sample_dt) {
  return rollout(spec, s.params, s.y0, {}, 0.0, horizon, sample_dt);
}

/// Steps per second from the minimum over `repeats` timings. Each timing
/// covers enough back-to-back rollouts to last at least 20 ms and is divided
/// by their count, so sub-millisecond rollouts are not dominated by timer
/// resolution.
inline double measure_throughput(const NetworkSample& s, const IntegratorSpec& spec, double horizon,
                                 double sample_dt, int repeats) {
  auto t0 = std::chrono::steady_clock::now();
  std::size_t sink = bench_rollout(s, spec, horizon, sample_dt).size();
  const double once = std::max(detail::seconds_since(t0), 1e-9);
  const int inner = std::max(1, static_cast<int>(std::ceil(0.02 / once)));
  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < repeats; ++r) {
    t0 = std::chrono::steady_clock::now();
    for (int k = 0; k < inner; ++k) sink += bench_rollout(s, spec, horizon, sample_dt).size();
    best = std::min(best, detail::seconds_since(t0) / inner);
  }
  if (sink == 0) throw NumericalError("empty benchmark rollout");
  return detail::steps_of(spec, horizon) / best;
}

/// Accuracy of every method against the reference on n_configs networks per
/// set, plus min-of-repeats throughput on each set's first network.
/// `progress` (optional) receives each finished configuration index.
inline BenchReport run_bench(const BenchConfig& cfg, const std::function<void(int)>& progress = {}) {
  cfg.validate();
  BenchReport rep;
  rep.config = cfg;
  const IntegratorSpec ref_spec{Method::DoPri5, cfg.reference_dt};
  std::vector<BenchMethod> all = cfg.methods;
  all.insert(all.begin(), BenchMethod{"reference", ref_spec, false});
  bool any_ud = false;
  for (const BenchMethod& m : cfg.methods) any_ud = any_ud || m.underdamped_set;

  std::vector<std::vector<double>> per(all.size());
  std::vector<int> div(all.size(), 0);
  for (int set = 0; set < (any_ud ? 2 : 1); ++set) {
    const bool ud = set == 1;
    for (int i = 0; i < cfg.n_configs; ++i) {
      const std::uint64_t seed = cfg.config_seed(i, ud);
      const NetworkSample s = sample_network(seed, cfg.n, ud);
      auto t0 = std::chrono::steady_clock::now();
      const Trajectory ref = bench_rollout(s, ref_spec, cfg.horizon, cfg.sample_dt);
      const double ref_time = detail::seconds_since(t0);
      if (!ud) {
        rep.rows.push_back({"reference", seed, 0.0, false, detail::steps_of(ref_spec, cfg.horizon) / ref_time});
        per[0].push_back(0.0);
      }
      Trajectory cfa_ud, udcon;
      for (std::size_t mi = 1; mi < all.size(); ++mi) {
        const BenchMethod& m = all[mi];
        const bool cross = ud && m.spec.method == Method::CfaCon;
        if (m.underdamped_set != ud && !cross) continue;
        BenchRow row{m.name, seed, 0.0, false, 0.0};
        try {
          t0 = std::chrono::steady_clock::now();
          Trajectory tr = bench_rollout(s, m.spec, cfg.horizon, cfg.sample_dt);
          row.steps_per_sec = detail::steps_of(m.spec, cfg.horizon) / detail::seconds_since(t0);
          row.rmse = detail::position_rmse(tr, ref, cfg.n);
          if (!std::isfinite(row.rmse)) row.diverged = true;
          if (cross) cfa_ud = std::move(tr);
          else if (m.spec.method == Method::CfaUdCon) udcon = std::move(tr);
        } catch (const DivergenceError&) {
          row.diverged = true;
        }
        if (cross) continue;
        rep.rows.push_back(row);
        if (row.diverged) ++div[mi];
        else per[mi].push_back(row.rmse);
      }
      if (cfa_ud.size() > 0 && udcon.size() == cfa_ud.size()) {
        for (std::size_t k = 0; k < udcon.size(); ++k) {
          rep.udcon_cfa_max_diff =
              std::max(rep.udcon_cfa_max_diff, (udcon.states[k] - cfa_ud.states[k]).cwiseAbs().maxCoeff());
        }
      }
      if (progress) progress(i + (ud ? cfg.n_configs : 0));
    }
  }

  const NetworkSample gen0 = sample_network(cfg.config_seed(0, false), cfg.n, false);
  const NetworkSample ud0 = any_ud ? sample_network(cfg.config_seed(0, true), cfg.n, true) : gen0;
  for (std::size_t mi = 0; mi < all.size(); ++mi) {
    const BenchMethod& m = all[mi];
    MethodSummary sum;
    sum.name = m.name;
    sum.dt = m.spec.dt;
    sum.underdamped_set = m.underdamped_set;
    sum.runs = static_cast<int>(per[mi].size()) + div[mi];
    sum.diverged = div[mi];
    if (!per[mi].empty()) {
      double mean = 0.0;
      for (double v : per[mi]) mean += v;
      mean /= static_cast<double>(per[mi].size());
      double var = 0.0;
      for (double v : per[mi]) var += (v - mean) * (v - mean);
      sum.rmse_mean = mean;
      sum.rmse_std = std::sqrt(var / static_cast<double>(per[mi].size()));
    }
    const int repeats = mi == 0 ? std::min(cfg.throughput_repeats, 3) : cfg.throughput_repeats;
    try {
      sum.steps_per_sec =
          measure_throughput(m.underdamped_set ? ud0 : gen0, m.spec, cfg.horizon, cfg.sample_dt, repeats);
    } catch (const DivergenceError&) {
      sum.steps_per_sec = 0.0;  // not timed: the method diverges on the timing network
    }
    sum.sim_real_factor = sum.steps_per_sec * m.spec.dt;
    rep.methods.push_back(sum);
  }
  if (any_ud) {
    for (const BenchMethod& m : cfg.methods) {
      if (m.spec.method != Method::CfaCon || m.underdamped_set) continue;
      rep.cfa_con_underdamped_steps_per_sec =
          measure_throughput(ud0, m.spec, cfg.horizon, cfg.sample_dt, cfg.throughput_repeats);
      break;
    }
  }
  return rep;
}

/// method,config_seed,rmse,steps_per_sec with 17 significant digits;
/// diverged runs print "diverged" as their rmse. Only the last column
/// depends on timing.
inline void write_bench_csv(std::ostream& os, const BenchReport& rep) {
  os << "method,config_seed,rmse,steps_per_sec\n";
  for (const BenchRow& r : rep.rows) {
    os << r.method << ',' << r.config_seed << ',' << (r.diverged ? std::string("diverged") : format17(r.rmse))
       << ',' << format17(r.steps_per_sec) << '\n';
  }
}

inline nlohmann::ordered_json bench_summary_json(const BenchReport& rep, bool with_timing = true) {
  nlohmann::ordered_json j;
  j["n_configs"] = rep.config.n_configs;
  j["n"] = rep.config.n;
  j["horizon"] = rep.config.horizon;
  j["sample_dt"] = rep.config.sample_dt;
  j["reference_dt"] = rep.config.reference_dt;
  j["seed"] = rep.config.seed;
  nlohmann::ordered_json ms = nlohmann::ordered_json::array();
  for (const MethodSummary& m : rep.methods) {
    nlohmann::ordered_json e;
    e["method"] = m.name;
    e["dt"] = m.dt;
    e["set"] = m.underdamped_set ? "underdamped" : "general";
    e["rmse_mean"] = m.rmse_mean;
    e["rmse_std"] = m.rmse_std;
    e["runs"] = m.runs;
    e["diverged"] = m.diverged;
    if (with_timing) {
      e["steps_per_sec"] = m.steps_per_sec;
      e["sim_real_factor"] = m.sim_real_factor;
    }
    ms.push_back(e);
  }
  j["methods"] = ms;
  j["udcon_cfa_max_diff"] = rep.udcon_cfa_max_diff;
  if (with_timing) j["cfa_con_underdamped_steps_per_sec"] = rep.cfa_con_underdamped_steps_per_sec;
  return j;
}

}  // namespace isscon
