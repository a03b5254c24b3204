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

// System identification of a CON from state-space trajectories: datasets,
// rollout loss, central-difference gradients and an AdamW training loop
// over the raw Cholesky parameters.

#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "isscon/plants.hpp"
#include "isscon/stability.hpp"

namespace isscon {

// -----------------------------------------------------------------------------
// Observation map
// -----------------------------------------------------------------------------

/// Plant-to-model coordinates: z = q / position_scale, z_dot = q_dot /
/// position_scale, u_model = u / input_scale. Empty scales mean identity.
struct ObservationMap {
  Vec position_scale;
  Vec input_scale;

  static ObservationMap identity() { return {}; }

  /// Strains normalized by their bound, inputs by the actuation bound.
  static ObservationMap for_pcc(const PccRobot& robot) {
    return {robot.strain_bound(), robot.actuation_bound()};
  }

  Vec to_model_state(const Vec& y) const {
    if (position_scale.size() == 0) return y;
    const Eigen::Index n = position_scale.size();
    require_dim(y.size(), 2 * n, "plant state");
    Vec z(2 * n);
    z.head(n) = y.head(n).cwiseQuotient(position_scale);
    z.tail(n) = y.tail(n).cwiseQuotient(position_scale);
    return z;
  }

  Vec to_plant_state(const Vec& z) const {
    if (position_scale.size() == 0) return z;
    const Eigen::Index n = position_scale.size();
    require_dim(z.size(), 2 * n, "model state");
    Vec y(2 * n);
    y.head(n) = z.head(n).cwiseProduct(position_scale);
    y.tail(n) = z.tail(n).cwiseProduct(position_scale);
    return y;
  }

  Vec to_model_position(const Vec& q) const {
    return position_scale.size() == 0 ? q : Vec(q.cwiseQuotient(position_scale));
  }

  Vec to_model_input(const Vec& u) const {
    return input_scale.size() == 0 ? u : Vec(u.cwiseQuotient(input_scale));
  }

  Vec to_plant_input(const Vec& u_model) const {
    return input_scale.size() == 0 ? u_model : Vec(u_model.cwiseProduct(input_scale));
  }
};

inline nlohmann::ordered_json to_json(const ObservationMap& map) {
  nlohmann::ordered_json j;
  j["position_scale"] = std::vector<double>(map.position_scale.begin(), map.position_scale.end());
  j["input_scale"] = std::vector<double>(map.input_scale.begin(), map.input_scale.end());
  return j;
}

inline ObservationMap observation_map_from_json(const nlohmann::json& j) {
  ObservationMap map;
  if (j.contains("position_scale")) map.position_scale = detail::read_vec(j, "position_scale");
  if (j.contains("input_scale")) map.input_scale = detail::read_vec(j, "input_scale");
  if ((map.position_scale.array() <= 0.0).any() || (map.input_scale.array() <= 0.0).any()) {
    throw ConfigError("observation map scales must be positive");
  }
  return map;
}

// -----------------------------------------------------------------------------
// Dataset
// -----------------------------------------------------------------------------

enum class Split { Train, Val, Test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw ConfigError("unknown split '" + s + "'");
}

/// Trajectories in model coordinates with their split tags. Every trajectory
/// records its (constant) input at each sample.
struct Dataset {
  std::vector<Trajectory> trajectories;
  std::vector<Split> splits;
  std::vector<std::uint64_t> seeds;
  std::string source;
  double horizon = 0.0;
  double sample_dt = 0.0;
  ObservationMap map;

  std::size_t size() const { return trajectories.size(); }

  std::vector<Trajectory> select(Split s) const {
    std::vector<Trajectory> out;
    for (std::size_t i = 0; i < trajectories.size(); ++i)
      if (splits[i] == s) out.push_back(trajectories[i]);
    return out;
  }

  void validate() const {
    if (trajectories.empty()) throw PreconditionError("dataset is empty");
    if (splits.size() != trajectories.size()) throw DimensionError("dataset: split tags missing");
    const Trajectory& first = trajectories.front();
    for (const Trajectory& tr : trajectories) {
      tr.validate();
      if (tr.n() != first.n()) throw DimensionError("dataset: inconsistent state dimension");
      if (tr.m() != first.m()) throw DimensionError("dataset: inconsistent input dimension");
      if (tr.size() != first.size()) throw DimensionError("dataset: inconsistent horizon");
      if (tr.size() > 1 && std::abs(tr.sample_dt() - first.sample_dt()) > 1e-12) {
        throw DimensionError("dataset: inconsistent sample dt");
      }
      if (!tr.is_uniform()) throw DimensionError("dataset: non-uniform sample grid");
    }
  }
};

struct DatasetConfig {
  int n_train = 50;
  int n_val = 10;
  int n_test = 10;
  double horizon = 3.0;
  double sample_dt = 0.05;
  IntegratorSpec integrator{Method::DoPri5, 1e-3, true, 1e-8, 1e-10};

  int total() const { return n_train + n_val + n_test; }

  void validate() const {
    if (n_train < 1 || n_val < 0 || n_test < 0) throw ConfigError("dataset split sizes invalid");
    if (!(horizon > 0.0 && sample_dt > 0.0)) throw ConfigError("dataset horizon and dt must be positive");
    integrator.validate();
  }
};

namespace detail {

inline Split split_of(const DatasetConfig& cfg, int i) {
  if (i < cfg.n_train) return Split::Train;
  if (i < cfg.n_train + cfg.n_val) return Split::Val;
  return Split::Test;
}

}  // namespace detail

/// Trajectory i uses stream fork(i) of the seed: its initial state first,
/// then its constant input.
inline Dataset generate_dataset(const PlantModel& plant, const DatasetConfig& cfg, std::uint64_t seed,
                                const ObservationMap& map = {}) {
  cfg.validate();
  Dataset ds;
  ds.source = to_string(plant.kind());
  ds.horizon = cfg.horizon;
  ds.sample_dt = cfg.sample_dt;
  ds.map = map;
  const CounterRng root(seed);
  for (int i = 0; i < cfg.total(); ++i) {
    CounterRng rng = root.fork(static_cast<std::uint64_t>(i));
    const Vec y0 = sample_initial_state(plant, rng);
    const Vec u = sample_constant_input(plant, rng);
    Trajectory raw = simulate_plant(plant, cfg.integrator, y0, u, cfg.horizon, cfg.sample_dt);
    Trajectory tr;
    const Vec um = map.to_model_input(u);
    for (std::size_t k = 0; k < raw.size(); ++k) tr.push(raw.t[k], map.to_model_state(raw.states[k]), um);
    ds.trajectories.push_back(std::move(tr));
    ds.splits.push_back(detail::split_of(cfg, i));
    ds.seeds.push_back(rng.key());
  }
  return ds;
}

/// Data from a known CON in W-coordinates: y0 ~ U(-1, 1), constant input
/// u ~ U(-1, 1)^m per trajectory.
inline Dataset generate_dataset(const ConParams& generator, const DatasetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const ConMatrices c = generator.materialize();
  const Eigen::Index n = c.n(), m = c.m();
  auto field = [&c](double, const Vec& y, const Vec& u) { return field_w(c, y, input_forcing(c, u)); };
  Dataset ds;
  ds.source = "con";
  ds.horizon = cfg.horizon;
  ds.sample_dt = cfg.sample_dt;
  const CounterRng root(seed);
  for (int i = 0; i < cfg.total(); ++i) {
    CounterRng rng = root.fork(static_cast<std::uint64_t>(i));
    Vec y0(2 * n);
    for (Eigen::Index k = 0; k < 2 * n; ++k) y0[k] = rng.uniform(-1.0, 1.0);
    Vec u(m);
    for (Eigen::Index k = 0; k < m; ++k) u[k] = rng.uniform(-1.0, 1.0);
    InputSignal hold = [&u](double) { return u; };
    Trajectory tr = rollout(cfg.integrator, field, y0, hold, 0.0, cfg.horizon, cfg.sample_dt);
    if (m == 0) {
      tr.inputs.assign(tr.size(), Vec(0));
    }
    ds.trajectories.push_back(std::move(tr));
    ds.splits.push_back(detail::split_of(cfg, i));
    ds.seeds.push_back(rng.key());
  }
  return ds;
}

/// One CSV per trajectory plus manifest.json (source, seeds, dt, horizon,
/// split, input).
inline void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json man;
  man["source"] = ds.source;
  man["sample_dt"] = ds.sample_dt;
  man["horizon"] = ds.horizon;
  man["observation_map"] = to_json(ds.map);
  nlohmann::ordered_json items = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "traj_%04zu.csv", i);
    std::ofstream os(dir / name);
    if (!os) throw ConfigError("cannot write " + (dir / name).string());
    write_csv(os, ds.trajectories[i]);
    nlohmann::ordered_json it;
    it["file"] = name;
    it["split"] = to_string(ds.splits[i]);
    it["seed"] = i < ds.seeds.size() ? ds.seeds[i] : 0;
    const Trajectory& tr = ds.trajectories[i];
    const Vec u = tr.inputs.empty() ? Vec() : tr.inputs.front();
    it["u"] = std::vector<double>(u.begin(), u.end());
    items.push_back(it);
  }
  man["trajectories"] = items;
  std::ofstream os(dir / "manifest.json");
  if (!os) throw ConfigError("cannot write " + (dir / "manifest.json").string());
  os << man.dump(2) << "\n";
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw ConfigError("cannot open " + (dir / "manifest.json").string());
  nlohmann::json man;
  try {
    man = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("manifest.json: ") + e.what());
  }
  Dataset ds;
  try {
    ds.source = man.at("source").get<std::string>();
    ds.sample_dt = man.at("sample_dt").get<double>();
    ds.horizon = man.at("horizon").get<double>();
    if (man.contains("observation_map")) ds.map = observation_map_from_json(man["observation_map"]);
    for (const auto& it : man.at("trajectories")) {
      std::ifstream ts(dir / it.at("file").get<std::string>());
      if (!ts) throw ConfigError("cannot open trajectory " + it.at("file").get<std::string>());
      ds.trajectories.push_back(read_csv(ts));
      ds.splits.push_back(split_from_string(it.at("split").get<std::string>()));
      ds.seeds.push_back(it.value("seed", std::uint64_t{0}));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("manifest.json: ") + e.what());
  }
  ds.validate();
  return ds;
}

// -----------------------------------------------------------------------------
// Loss
// -----------------------------------------------------------------------------

inline constexpr double kDivergencePenalty = 1e6;

/// Model rollout from the recorded initial state with the recorded inputs
/// held over each sample interval; same sample grid as `data`.
inline Trajectory predict(const ConMatrices& c, const Trajectory& data, const IntegratorSpec& spec) {
  if (data.size() < 2) {
    Trajectory tr;
    if (data.size() == 1) tr.push(data.t[0], data.states[0]);
    return tr;
  }
  require_dim(data.n(), c.n(), "trajectory state dimension");
  const double h = data.sample_dt();
  const double t0 = data.t.front();
  auto field = [&c](double, const Vec& y, const Vec& u) { return field_w(c, y, input_forcing(c, u)); };
  InputSignal u_of_t;
  if (!data.inputs.empty() && c.m() > 0) {
    u_of_t = [&data, h, t0](double t) {
      const auto k = static_cast<std::size_t>(std::floor((t - t0) / h + 1e-9));
      return data.inputs[std::min(k, data.inputs.size() - 1)];
    };
  }
  return rollout(spec, field, data.states.front(), u_of_t, t0, data.t.back(), h);
}

/// Mean squared state error of one trajectory over samples 1..N, or the
/// divergence penalty when the rollout blows up.
inline double trajectory_loss(const ConMatrices& c, const Trajectory& data, const IntegratorSpec& spec) {
  if (data.size() < 2) return 0.0;
  try {
    const Trajectory pred = predict(c, data, spec);
    double acc = 0.0;
    for (std::size_t k = 1; k < data.size(); ++k) acc += (pred.states[k] - data.states[k]).squaredNorm();
    const double loss = acc / static_cast<double>(data.size() - 1);
    return std::isfinite(loss) ? std::min(loss, kDivergencePenalty) : kDivergencePenalty;
  } catch (const DivergenceError&) {
    return kDivergencePenalty;
  }
}

/// Mean over trajectories of the per-trajectory mean squared state error.
inline double rollout_loss(const ConParams& p, std::span<const Trajectory> batch, const IntegratorSpec& spec) {
  if (batch.empty()) return 0.0;
  const ConMatrices c = p.materialize();
  double acc = 0.0;
  for (const Trajectory& tr : batch) acc += trajectory_loss(c, tr, spec);
  return acc / static_cast<double>(batch.size());
}

/// Root mean squared position error over all trajectories, samples and
/// coordinates (samples 1..N).
inline double position_rmse(const ConParams& p, std::span<const Trajectory> data, const IntegratorSpec& spec) {
  const ConMatrices c = p.materialize();
  double acc = 0.0;
  std::size_t count = 0;
  for (const Trajectory& tr : data) {
    const Trajectory pred = predict(c, tr, spec);
    const Eigen::Index n = tr.n();
    for (std::size_t k = 1; k < tr.size(); ++k) {
      acc += (pred.states[k].head(n) - tr.states[k].head(n)).squaredNorm();
      count += static_cast<std::size_t>(n);
    }
  }
  return count == 0 ? 0.0 : std::sqrt(acc / static_cast<double>(count));
}

/// Central differences g_i = (L(theta + h e_i) - L(theta - h e_i)) / (2h);
/// a non-finite probe counts as the divergence penalty.
inline Vec fd_gradient(const std::function<double(const Vec&)>& loss, const Vec& theta, double h) {
  if (!(h > 0.0)) throw PreconditionError("fd step must be positive");
  auto safe = [&loss](const Vec& x) {
    const double v = loss(x);
    return std::isfinite(v) ? v : kDivergencePenalty;
  };
  Vec g(theta.size());
  Vec probe = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    probe[i] = theta[i] + h;
    const double fp = safe(probe);
    probe[i] = theta[i] - h;
    const double fm = safe(probe);
    probe[i] = theta[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// -----------------------------------------------------------------------------
// Training
// -----------------------------------------------------------------------------

struct FitConfig {
  double learning_rate = 0.05;
  int warmup_epochs = 5;
  int epochs = 200;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  int batch_size = 10;
  IntegratorSpec integrator{Method::RK4, 0.025};
  double fd_step = 1e-6;
  int patience = 20;
  int checkpoint_every = 10;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (warmup_epochs < 0 || epochs < 1) throw ConfigError("epoch counts invalid");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam moments must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (!(fd_step >= 1e-7 && fd_step <= 1e-4)) throw ConfigError("fd_step must lie in [1e-7, 1e-4]");
    if (patience < 1 || checkpoint_every < 1) throw ConfigError("patience and checkpoint interval must be >= 1");
    integrator.validate();
  }
};

/// Linear warm-up to the base rate over warmup_epochs, then cosine decay
/// to zero at the last epoch.
inline double learning_rate_at(const FitConfig& cfg, int epoch) {
  if (epoch < cfg.warmup_epochs) return cfg.learning_rate * (epoch + 1) / cfg.warmup_epochs;
  const int span = std::max(1, cfg.epochs - cfg.warmup_epochs);
  const double x = static_cast<double>(epoch - cfg.warmup_epochs) / span;
  return 0.5 * cfg.learning_rate * (1.0 + std::cos(M_PI * x));
}

/// Decoupled weight decay Adam.
class AdamW {
 public:
  AdamW(Eigen::Index size, double beta1, double beta2, double eps, double weight_decay)
      : m_(Vec::Zero(size)), v_(Vec::Zero(size)), b1_(beta1), b2_(beta2), eps_(eps), wd_(weight_decay) {}

  void step(Vec& theta, const Vec& grad, double lr) {
    ++t_;
    m_ = b1_ * m_ + (1.0 - b1_) * grad;
    v_ = b2_ * v_ + (1.0 - b2_) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      const double mh = m_[i] / c1;
      const double vh = v_[i] / c2;
      theta[i] -= lr * (mh / (std::sqrt(vh) + eps_) + wd_ * theta[i]);
    }
  }

  int steps() const { return t_; }

 private:
  Vec m_, v_;
  double b1_, b2_, eps_, wd_;
  int t_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct Checkpoint {
  int epoch = 0;
  ConParams params;
  double train_loss = 0.0;
  double val_loss = 0.0;
  bool certified = false;
};

struct FitResult {
  ConParams best;
  int best_epoch = -1;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<EpochRecord> history;
  std::vector<Checkpoint> checkpoints;
  bool early_stopped = false;
};

/// Default starting point: M_w^-1 = I, K_w = I, D_w = 0.5 I, b = 0 and a
/// small random B.
inline ConParams initial_params(Eigen::Index n, Eigen::Index m, std::uint64_t seed) {
  ConParams p = ConParams::diagonal(n, m, 1.0, 1.0, 0.5);
  CounterRng rng(seed);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j) p.B(i, j) = rng.uniform(-0.1, 0.1);
  return p;
}

/// Trains `init` on the train split with AdamW on minibatch central-difference
/// gradients and keeps the iterate with the lowest validation loss (train
/// loss when there is no validation split). Epoch e shuffles the train set
/// with stream fork(e) of cfg.seed. `on_epoch` may observe progress.
inline FitResult fit(const Dataset& data, const ConParams& init, const FitConfig& cfg,
                     const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  data.validate();
  cfg.validate();
  init.validate();
  const std::vector<Trajectory> train = data.select(Split::Train);
  const std::vector<Trajectory> val = data.select(Split::Val);
  if (train.empty()) throw PreconditionError("dataset has no training trajectories");
  require_dim(train.front().n(), init.n, "dataset state dimension");

  FitResult res;
  Vec theta = init.to_vector();
  AdamW opt(theta.size(), cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);
  const CounterRng root(cfg.seed);
  std::vector<std::size_t> order(train.size());
  std::vector<Trajectory> batch;
  int since_best = 0;

  auto evaluate = [&](const ConParams& p, const std::vector<Trajectory>& set) {
    return rollout_loss(p, set, cfg.integrator);
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = learning_rate_at(cfg, epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    CounterRng rng = root.fork(static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t k = start; k < stop; ++k) batch.push_back(train[order[k]]);
      auto loss = [&](const Vec& th) { return rollout_loss(init.with_vector(th), batch, cfg.integrator); };
      const Vec g = fd_gradient(loss, theta, cfg.fd_step);
      opt.step(theta, g, lr);
    }

    const ConParams p = init.with_vector(theta);
    EpochRecord rec{epoch, lr, evaluate(p, train), val.empty() ? 0.0 : evaluate(p, val)};
    res.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const double score = val.empty() ? rec.train_loss : rec.val_loss;
    if (score < res.best_val_loss) {
      res.best_val_loss = score;
      res.best = p;
      res.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    const bool stop = since_best >= cfg.patience;
    if ((epoch + 1) % cfg.checkpoint_every == 0 || stop || epoch + 1 == cfg.epochs) {
      res.checkpoints.push_back({epoch, p, rec.train_loss, rec.val_loss, certify(p.materialize()).valid});
    }
    if (stop) {
      res.early_stopped = true;
      break;
    }
  }
  return res;
}

inline nlohmann::ordered_json to_json(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["learning_rate"] = r.learning_rate;
  j["train_loss"] = r.train_loss;
  j["val_loss"] = r.val_loss;
  return j;
}

inline FitConfig fit_config_from_json(const nlohmann::json& j) {
  FitConfig cfg;
  if (!j.is_object()) throw ConfigError("fit config must be a JSON object");
  try {
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.warmup_epochs = j.value("warmup_epochs", cfg.warmup_epochs);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.beta1 = j.value("beta1", cfg.beta1);
    cfg.beta2 = j.value("beta2", cfg.beta2);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.fd_step = j.value("fd_step", cfg.fd_step);
    cfg.patience = j.value("patience", cfg.patience);
    cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
    cfg.integrator.dt = j.value("dt", cfg.integrator.dt);
    if (j.contains("method")) cfg.integrator.method = method_from_string(j["method"].get<std::string>());
    if (j.contains("integrator")) cfg.integrator = integrator_spec_from_json(j["integrator"], cfg.integrator);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("fit config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

// -----------------------------------------------------------------------------
// End-to-end identification
// -----------------------------------------------------------------------------

/// Random W-chart network: every raw Cholesky entry ~ U(-0.5, 0.5), then
/// b ~ U(-1, 1)^n and B ~ U(-1, 1)^{n x m} (row-major), in that order.
inline ConParams random_generator(Eigen::Index n, Eigen::Index m, std::uint64_t seed) {
  ConParams g = ConParams::zeros(n, m);
  CounterRng rng(seed);
  for (Eigen::Index i = 0; i < g.chol_M_inv.size(); ++i) {
    g.chol_M_inv[i] = rng.uniform(-0.5, 0.5);
    g.chol_K[i] = rng.uniform(-0.5, 0.5);
    g.chol_D[i] = rng.uniform(-0.5, 0.5);
  }
  for (Eigen::Index i = 0; i < n; ++i) g.b[i] = rng.uniform(-1.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j) g.B(i, j) = rng.uniform(-1.0, 1.0);
  return g;
}

/// Data from a plant, or from a random known CON when `plant` is empty.
/// Streams: dataset `seed`, initial B seed + 1, generator seed + 2, minibatch
/// shuffling seed + 3.
struct SysidExperimentConfig {
  std::uint64_t seed = 1;
  std::optional<PlantModel> plant;
  Eigen::Index generator_n = 2;
  Eigen::Index generator_m = 1;
  DatasetConfig data;
  FitConfig fit;
  /// Initial M_w^-1 = init_inverse_mass I, K_w = I, D_w = 0.5 I.
  double init_inverse_mass = 1.0;

  void validate() const {
    data.validate();
    fit.validate();
    if (!plant && (generator_n < 1 || generator_m < 0)) throw ConfigError("generator dimensions invalid");
    if (!(init_inverse_mass > 0.0)) throw ConfigError("init_inverse_mass must be positive");
  }
};

struct SysidExperimentResult {
  Dataset data;
  std::optional<ConParams> generator;
  FitResult fit;
  double test_rmse = 0.0;

  bool all_checkpoints_certified() const {
    for (const Checkpoint& c : fit.checkpoints)
      if (!c.certified) return false;
    return !fit.checkpoints.empty();
  }
};

inline SysidExperimentResult run_sysid_experiment(const SysidExperimentConfig& cfg,
                                                  const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  SysidExperimentResult res;
  Eigen::Index n = 0, m = 0;
  if (cfg.plant) {
    const ObservationMap map =
        cfg.plant->kind() == PlantKind::PccRobot ? ObservationMap::for_pcc(cfg.plant->pcc()) : ObservationMap{};
    res.data = generate_dataset(*cfg.plant, cfg.data, cfg.seed, map);
    n = cfg.plant->dof();
    m = cfg.plant->input_dim();
  } else {
    res.generator = random_generator(cfg.generator_n, cfg.generator_m, cfg.seed + 2);
    res.data = generate_dataset(*res.generator, cfg.data, cfg.seed);
    n = cfg.generator_n;
    m = cfg.generator_m;
  }
  ConParams init = ConParams::diagonal(n, m, cfg.init_inverse_mass, 1.0, 0.5);
  init.B = initial_params(n, m, cfg.seed + 1).B;
  FitConfig fc = cfg.fit;
  fc.seed = cfg.seed + 3;
  res.fit = fit(res.data, init, fc, on_epoch);
  res.test_rmse = position_rmse(res.fit.best, res.data.select(Split::Test), fc.integrator);
  return res;
}

inline DatasetConfig dataset_config_from_json(const nlohmann::json& j) {
  DatasetConfig cfg;
  try {
    cfg.n_train = j.value("n_train", cfg.n_train);
    cfg.n_val = j.value("n_val", cfg.n_val);
    cfg.n_test = j.value("n_test", cfg.n_test);
    cfg.horizon = j.value("horizon", cfg.horizon);
    cfg.sample_dt = j.value("sample_dt", cfg.sample_dt);
    if (j.contains("integrator")) cfg.integrator = integrator_spec_from_json(j["integrator"], cfg.integrator);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dataset config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace isscon
