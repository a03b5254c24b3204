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

// The `isscon` command line: simulate, certify, bench, sysid, control and
// dataset subcommands over JSON configs. Exit codes: 0 success, 1 usage or
// config error, 2 numerical failure.

#pragma once

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "isscon/bench.hpp"
#include "isscon/control.hpp"

namespace isscon::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitNumerical = 2;

/// Parses a JSON file; syntax errors keep nlohmann's line/column position.
inline nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

/// Either chart: a W-chart document (chol_* fields) or an original-chart one
/// with dense K, D, W, b and optional B and mass.
struct Network {
  std::optional<ConParams> w_chart;
  std::optional<OriginalConParams> original;

  Eigen::Index n() const { return w_chart ? w_chart->n : original->n(); }
  Eigen::Index m() const { return w_chart ? w_chart->m : original->m(); }

  ConMatrices matrices() const { return w_chart ? w_chart->materialize() : to_w_matrices(*original); }
};

inline Network network_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("network must be a JSON object");
  Network net;
  if (j.contains("chol_K")) {
    net.w_chart = con_params_from_json(j);
    return net;
  }
  if (!j.contains("K")) throw ConfigError("network needs either chol_K (W chart) or K, D, W (original chart)");
  OriginalConParams p;
  try {
    const auto n = static_cast<Eigen::Index>(j.at("K").size());
    p.K = detail::read_mat(j, "K", n, n);
    p.D = detail::read_mat(j, "D", n, n);
    p.W = detail::read_mat(j, "W", n, n);
    p.b = detail::read_vec(j, "b");
    require_dim(p.b.size(), n, "b");
    Eigen::Index m = 0;
    if (j.contains("B") && !j.at("B").empty()) m = static_cast<Eigen::Index>(j.at("B").at(0).size());
    p.B = m == 0 ? Mat(n, 0) : detail::read_mat(j, "B", n, m);
    if (j.contains("mass")) {
      p.mass = detail::read_vec(j, "mass");
      require_dim(p.mass.size(), n, "mass");
      if ((p.mass.array() <= 0.0).any()) throw ConfigError("masses must be positive");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("network: ") + e.what());
  } catch (const DimensionError& e) {
    throw ConfigError(std::string("network: ") + e.what());
  }
  net.original = p;
  return net;
}

inline Vec vec_from_json(const nlohmann::json& j, const char* key, Eigen::Index size) {
  Vec v = detail::read_vec(j, key);
  if (v.size() != size) {
    throw ConfigError(std::string("'") + key + "' needs " + std::to_string(size) + " entries");
  }
  return v;
}

inline ControlExperimentConfig control_config_from_json(const nlohmann::json& j) {
  ControlExperimentConfig cfg;
  try {
    if (j.contains("plant")) {
      nlohmann::json pj = j["plant"];
      if (!pj.contains("kind")) pj["kind"] = "pcc";
      const PlantModel plant = plant_from_json(pj);
      if (plant.kind() != PlantKind::PccRobot) throw ConfigError("control experiments need a pcc plant");
      cfg.plant = plant.pcc().params();
    }
    const Eigen::Index n = cfg.plant.dof();
    cfg.psatid = ControllerGains::psatid(n);
    cfg.psatid_ff = ControllerGains::psatid_ff(n);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("dataset")) cfg.data = dataset_config_from_json(j["dataset"]);
    if (j.contains("fit")) {
      FitConfig f = fit_config_from_json(j["fit"]);
      if (!j["fit"].contains("dt") && !j["fit"].contains("integrator")) f.integrator = cfg.fit.integrator;
      cfg.fit = f;
    }
    cfg.init_inverse_mass = j.value("init_inverse_mass", cfg.init_inverse_mass);
    cfg.setpoint_count = j.value("setpoints", cfg.setpoint_count);
    if (j.contains("model")) cfg.model = con_params_from_json(load_json(j["model"].get<std::string>()));
    if (j.contains("loop")) {
      const auto& l = j["loop"];
      cfg.loop.setpoint_duration = l.value("setpoint_duration", cfg.loop.setpoint_duration);
      cfg.loop.control_rate = l.value("control_rate", cfg.loop.control_rate);
      cfg.loop.band = l.value("band", cfg.loop.band);
      if (l.contains("plant_integrator"))
        cfg.loop.plant_integrator = integrator_spec_from_json(l["plant_integrator"], cfg.loop.plant_integrator);
    }
    if (j.contains("gains")) {
      const auto& g = j["gains"];
      if (g.contains("psatid")) cfg.psatid = gains_from_json(g["psatid"], n, cfg.psatid);
      if (g.contains("psatid_ff")) cfg.psatid_ff = gains_from_json(g["psatid_ff"], n, cfg.psatid_ff);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("control config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

inline SysidExperimentConfig sysid_config_from_json(const nlohmann::json& j) {
  SysidExperimentConfig cfg;
  try {
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("plant")) {
      cfg.plant = plant_from_json(j["plant"]);
      if (cfg.plant->kind() == PlantKind::PccRobot) cfg.init_inverse_mass = 100.0;
    } else if (j.contains("generator")) {
      cfg.generator_n = j["generator"].value("n", cfg.generator_n);
      cfg.generator_m = j["generator"].value("m", cfg.generator_m);
    } else {
      throw ConfigError("sysid config needs 'plant' or 'generator'");
    }
    if (j.contains("dataset")) cfg.data = dataset_config_from_json(j["dataset"]);
    if (j.contains("fit")) cfg.fit = fit_config_from_json(j["fit"]);
    cfg.init_inverse_mass = j.value("init_inverse_mass", cfg.init_inverse_mass);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("sysid config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

inline BenchConfig bench_config_from_json(const nlohmann::json& j) {
  BenchConfig cfg;
  try {
    cfg.n_configs = j.value("n_configs", cfg.n_configs);
    cfg.n = j.value("n", cfg.n);
    cfg.horizon = j.value("horizon", cfg.horizon);
    cfg.sample_dt = j.value("sample_dt", cfg.sample_dt);
    cfg.reference_dt = j.value("reference_dt", cfg.reference_dt);
    cfg.throughput_repeats = j.value("throughput_repeats", cfg.throughput_repeats);
    cfg.seed = j.value("seed", cfg.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bench config: ") + e.what());
  }
  return cfg;
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> configs;
  std::optional<double> horizon;
  std::optional<int> n;
};

class Runner {
 public:
  Runner(const Options& opt, std::ostream& out, std::ostream& err) : opt_(opt), out_(out), err_(err) {}

  int simulate() {
    const nlohmann::json j = config(true);
    const Network net = network_from_json(j.contains("network") ? j["network"] : j);
    const std::uint64_t seed = opt_.seed.value_or(j.value("seed", std::uint64_t{0}));
    const IntegratorSpec spec =
        j.contains("integrator") ? integrator_spec_from_json(j["integrator"]) : IntegratorSpec{};
    const double horizon = j.value("horizon", 10.0);
    const double sample_dt = j.value("sample_dt", 0.1);
    const Eigen::Index n = net.n();
    Vec y0(2 * n);
    if (j.contains("y0")) {
      y0 = vec_from_json(j, "y0", 2 * n);
    } else {
      CounterRng rng(seed);
      for (Eigen::Index i = 0; i < 2 * n; ++i) y0[i] = rng.uniform(-1.0, 1.0);
    }
    const Vec u = j.contains("input") ? vec_from_json(j, "input", net.m()) : Vec::Zero(net.m());
    InputSignal hold = [&u](double) { return u; };
    Trajectory tr;
    if (net.original) {
      tr = rollout(spec, *net.original, y0, hold, 0.0, horizon, sample_dt);
    } else {
      if (spec.method == Method::CfaCon || spec.method == Method::CfaUdCon) {
        throw ConfigError("closed-form methods need an original-chart network (K, D, W)");
      }
      const ConMatrices c = net.matrices();
      auto field = [&c](double, const Vec& y, const Vec& uu) { return field_w(c, y, input_forcing(c, uu)); };
      tr = rollout(spec, field, y0, hold, 0.0, horizon, sample_dt);
    }
    emit("trajectory.csv", to_csv(tr));
    return kExitOk;
  }

  int certify() {
    const nlohmann::json j = config(true);
    const Network net = network_from_json(j.contains("network") ? j["network"] : j);
    const StabilityCertificate cert = isscon::certify(net.matrices(), j.value("theta", 0.5));
    emit("certificate.json", to_json(cert).dump(2) + "\n");
    if (!cert.valid) {
      err_ << "not certified: " << cert.failure << '\n';
      return kExitNumerical;
    }
    return kExitOk;
  }

  int bench() {
    BenchConfig cfg = opt_.config.empty() ? BenchConfig{} : bench_config_from_json(config(true));
    if (opt_.configs) cfg.n_configs = *opt_.configs;
    if (opt_.horizon) cfg.horizon = *opt_.horizon;
    if (opt_.n) cfg.n = *opt_.n;
    if (opt_.seed) cfg.seed = *opt_.seed;
    cfg.validate();
    const BenchReport rep = run_bench(cfg);
    std::ostringstream csv;
    write_bench_csv(csv, rep);
    emit("bench.csv", csv.str());
    if (!opt_.out.empty()) write("summary.json", bench_summary_json(rep).dump(2) + "\n");
    return kExitOk;
  }

  int sysid() {
    SysidExperimentConfig cfg = sysid_config_from_json(config(true));
    if (opt_.seed) cfg.seed = *opt_.seed;
    const SysidExperimentResult res = run_sysid_experiment(cfg, [this](const EpochRecord& r) {
      err_ << "epoch " << r.epoch << " train " << format17(r.train_loss) << " val " << format17(r.val_loss)
           << '\n';
    });
    nlohmann::ordered_json m;
    m["test_rmse"] = res.test_rmse;
    m["best_epoch"] = res.fit.best_epoch;
    m["best_val_loss"] = res.fit.best_val_loss;
    m["early_stopped"] = res.fit.early_stopped;
    m["checkpoints"] = nlohmann::ordered_json::array();
    for (const Checkpoint& c : res.fit.checkpoints) {
      m["checkpoints"].push_back({{"epoch", c.epoch}, {"val_loss", c.val_loss}, {"certified", c.certified}});
    }
    nlohmann::ordered_json hist = nlohmann::ordered_json::array();
    for (const EpochRecord& r : res.fit.history) hist.push_back(to_json(r));
    if (!opt_.out.empty()) {
      write("model.json", to_json_string(res.fit.best) + "\n");
      write("history.json", hist.dump(2) + "\n");
      if (res.generator) write("generator.json", to_json_string(*res.generator) + "\n");
    }
    emit("metrics.json", m.dump(2) + "\n");
    return kExitOk;
  }

  int control() {
    ControlExperimentConfig cfg = opt_.config.empty() ? ControlExperimentConfig{} : control_config_from_json(config(true));
    if (opt_.seed) cfg.seed = *opt_.seed;
    const ControlExperimentResult res = run_control_experiment(cfg, [this](const std::string& s) { err_ << s << '\n'; });
    nlohmann::ordered_json m;
    m["fit_test_rmse"] = std::isfinite(res.fit_test_rmse) ? nlohmann::ordered_json(res.fit_test_rmse) : nullptr;
    m["setpoints"] = nlohmann::ordered_json::array();
    for (const Vec& q : res.setpoints) m["setpoints"].push_back(std::vector<double>(q.data(), q.data() + q.size()));
    m[to_string(cfg.psatid.mode)] = metrics_json(res.psatid);
    m[to_string(cfg.psatid_ff.mode)] = metrics_json(res.psatid_ff);
    if (!opt_.out.empty()) {
      write("model.json", to_json_string(res.model) + "\n");
      write("trajectory_psatid.csv", to_csv(res.psatid.trajectory));
      write("trajectory_psatid_ff.csv", to_csv(res.psatid_ff.trajectory));
    }
    emit("metrics.json", m.dump(2) + "\n");
    return res.psatid.diverged || res.psatid_ff.diverged ? kExitNumerical : kExitOk;
  }

  int dataset() {
    if (opt_.out.empty()) throw ConfigError("dataset needs --out <dir>");
    const nlohmann::json j = config(true);
    const std::uint64_t seed = opt_.seed.value_or(j.value("seed", std::uint64_t{0}));
    const DatasetConfig dc = j.contains("dataset") ? dataset_config_from_json(j["dataset"]) : DatasetConfig{};
    Dataset ds;
    if (j.contains("plant")) {
      const PlantModel plant = plant_from_json(j["plant"]);
      const ObservationMap map =
          plant.kind() == PlantKind::PccRobot ? ObservationMap::for_pcc(plant.pcc()) : ObservationMap{};
      ds = generate_dataset(plant, dc, seed, map);
    } else if (j.contains("generator")) {
      const auto& g = j["generator"];
      const ConParams gen = random_generator(g.value("n", Eigen::Index{2}), g.value("m", Eigen::Index{1}), seed + 2);
      ds = generate_dataset(gen, dc, seed);
      write("generator.json", to_json_string(gen) + "\n");
    } else {
      throw ConfigError("dataset config needs 'plant' or 'generator'");
    }
    write_dataset(opt_.out, ds);
    out_ << "wrote " << ds.size() << " trajectories to " << opt_.out << '\n';
    return kExitOk;
  }

 private:
  nlohmann::json config(bool required) const {
    if (opt_.config.empty()) {
      if (required) throw ConfigError("missing --config <path.json>");
      return nlohmann::json::object();
    }
    nlohmann::json j = load_json(opt_.config);
    if (!j.is_object()) throw ConfigError(opt_.config + ": top level must be a JSON object");
    return j;
  }

  void write(const std::string& name, const std::string& text) const {
    write_file(std::filesystem::path(opt_.out) / name, text);
  }

  /// Into --out when given, else stdout.
  void emit(const std::string& name, const std::string& text) const {
    if (opt_.out.empty()) out_ << text;
    else write(name, text);
  }

  Options opt_;
  std::ostream& out_;
  std::ostream& err_;
};

/// Entry point shared by tools/isscon.cpp and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Stable coupled oscillator networks: simulation, certification, identification and control",
               "isscon"};
  app.require_subcommand(1, 1);
  Options opt;
  auto common = [&opt](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", opt.config, "JSON config file");
    if (config_required) c->required();
    sub->add_option("--seed", opt.seed, "Seed for every random stream");
    sub->add_option("--out", opt.out, "Output directory (default: stdout)");
  };
  CLI::App* simulate = app.add_subcommand("simulate", "Roll out a network from a JSON description");
  common(simulate, true);
  CLI::App* certify = app.add_subcommand("certify", "Compute the stability certificate of a network");
  common(certify, true);
  CLI::App* bench = app.add_subcommand("bench", "Integrator accuracy and throughput benchmark");
  common(bench, false);
  bench->add_option("--configs", opt.configs, "Sampled networks per set")->check(CLI::PositiveNumber);
  bench->add_option("--horizon", opt.horizon, "Simulated seconds per rollout")->check(CLI::PositiveNumber);
  bench->add_option("--n", opt.n, "Oscillators per network")->check(CLI::PositiveNumber);
  CLI::App* sysid = app.add_subcommand("sysid", "Fit a network to generated trajectories");
  common(sysid, true);
  CLI::App* control = app.add_subcommand("control", "Closed-loop setpoint regulation of the PCC plant");
  common(control, false);
  CLI::App* dataset = app.add_subcommand("dataset", "Generate and write a trajectory dataset");
  common(dataset, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitConfig;
  }

  Runner r(opt, out, err);
  try {
    if (*simulate) return r.simulate();
    if (*certify) return r.certify();
    if (*bench) return r.bench();
    if (*sysid) return r.sysid();
    if (*control) return r.control();
    return r.dataset();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace isscon::cli
