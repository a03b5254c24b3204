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

// Coupled oscillator network (CON): parameterization, vector fields in the
// original and W-coordinate charts, equilibrium and potential energy.

#pragma once

#include <json.hpp>

#include <sstream>
#include <span>
#include <string>

#include "isscon/common.hpp"

namespace isscon {

/// Position/velocity pair. Integrators work on the flat vector [x; x_dot].
struct SystemState {
  Vec x;
  Vec x_dot;

  Eigen::Index n() const { return x.size(); }

  Vec flat() const {
    Vec y(2 * x.size());
    y << x, x_dot;
    return y;
  }

  static SystemState from_flat(const Vec& y) {
    if (y.size() % 2 != 0) throw DimensionError("state vector must have even length");
    const Eigen::Index n = y.size() / 2;
    return {y.head(n), y.tail(n)};
  }
};

inline Eigen::Index triangular_size(Eigen::Index n) { return n * (n + 1) / 2; }

/// Builds A = U^T U from the row-major upper triangle of U, with the diagonal
/// mapped through softplus(. + eps1) + eps2 so that A is always positive
/// definite with smallest eigenvalue bounded away from zero.
inline Mat materialize(std::span<const double> factor, Eigen::Index n,
                       double eps1 = 1e-6, double eps2 = 2e-6) {
  if (static_cast<Eigen::Index>(factor.size()) != triangular_size(n)) {
    throw DimensionError("Cholesky factor: expected " +
                         std::to_string(triangular_size(n)) + " entries, got " +
                         std::to_string(factor.size()));
  }
  if (!(eps1 > 0.0) || !(eps2 > 0.0)) {
    throw ParameterError("Cholesky offsets eps1, eps2 must be positive");
  }
  Mat u = Mat::Zero(n, n);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j, ++k) {
      const double raw = factor[k];
      if (!std::isfinite(raw)) throw ParameterError("non-finite Cholesky factor entry");
      u(i, j) = (i == j) ? softplus(raw + eps1) + eps2 : raw;
    }
  }
  Mat a = u.transpose() * u;
  // Symmetric by construction; copy the upper triangle to remove round-off.
  a.triangularView<Eigen::StrictlyLower>() = a.transpose().triangularView<Eigen::StrictlyLower>();
  return a;
}

inline Mat materialize(const Vec& factor, Eigen::Index n, double eps1 = 1e-6,
                       double eps2 = 2e-6) {
  return materialize(std::span<const double>(factor.data(), factor.size()), n, eps1, eps2);
}

/// Inverse of the diagonal map: the raw value whose materialized diagonal is
/// `u_ii`. Used to initialize parameters from a target matrix.
inline double unmaterialize_diagonal(double u_ii, double eps1 = 1e-6, double eps2 = 2e-6) {
  const double s = u_ii - eps2;
  if (!(s > 0.0)) throw ParameterError("target Cholesky diagonal must exceed eps2");
  // softplus^{-1}(s) = log(expm1(s))
  const double inv = s > 30.0 ? s + std::log1p(-std::exp(-s)) : std::log(std::expm1(s));
  return inv - eps1;
}

/// Materialized network in W-coordinates. Hand-built instances need not be
/// positive definite (certification reports the violation).
struct ConMatrices {
  Mat M_inv;
  Mat M;
  Mat K;
  Mat D;
  Vec b;
  Mat B;

  Eigen::Index n() const { return K.rows(); }
  Eigen::Index m() const { return B.cols(); }

  static ConMatrices from(Mat M_inv, Mat K, Mat D, Vec b, Mat B) {
    const Eigen::Index n = K.rows();
    require_dim(M_inv.rows(), n, "M_w^-1 rows");
    require_dim(M_inv.cols(), n, "M_w^-1 cols");
    require_dim(K.cols(), n, "K_w cols");
    require_dim(D.rows(), n, "D_w rows");
    require_dim(D.cols(), n, "D_w cols");
    require_dim(b.size(), n, "b");
    if (B.size() != 0) require_dim(B.rows(), n, "B rows");
    ConMatrices c;
    c.M = M_inv.fullPivLu().inverse();
    if ((M_inv - M_inv.transpose()).isZero(0.0)) c.M = 0.5 * (c.M + c.M.transpose()).eval();
    c.M_inv = std::move(M_inv);
    c.K = std::move(K);
    c.D = std::move(D);
    c.b = std::move(b);
    c.B = B.size() == 0 ? Mat(n, 0) : std::move(B);
    return c;
  }
};

/// Trainable CON parameters in W-coordinates.
struct ConParams {
  Eigen::Index n = 0;
  Eigen::Index m = 0;
  Vec chol_M_inv;
  Vec chol_K;
  Vec chol_D;
  Vec b;
  Mat B;
  double eps1 = 1e-6;
  double eps2 = 2e-6;

  /// Raw factors all zero, b = 0, B = 0.
  static ConParams zeros(Eigen::Index n, Eigen::Index m) {
    ConParams p;
    p.n = n;
    p.m = m;
    const Eigen::Index t = triangular_size(n);
    p.chol_M_inv = Vec::Zero(t);
    p.chol_K = Vec::Zero(t);
    p.chol_D = Vec::Zero(t);
    p.b = Vec::Zero(n);
    p.B = Mat::Zero(n, m);
    return p;
  }

  /// Diagonal network: M_w^-1 = m_inv I, K_w = k I, D_w = d I.
  static ConParams diagonal(Eigen::Index n, Eigen::Index m, double m_inv, double k, double d) {
    ConParams p = zeros(n, m);
    Eigen::Index idx = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      p.chol_M_inv[idx] = unmaterialize_diagonal(std::sqrt(m_inv), p.eps1, p.eps2);
      p.chol_K[idx] = unmaterialize_diagonal(std::sqrt(k), p.eps1, p.eps2);
      p.chol_D[idx] = unmaterialize_diagonal(std::sqrt(d), p.eps1, p.eps2);
      idx += n - i;
    }
    return p;
  }

  Eigen::Index parameter_count() const { return 3 * triangular_size(n) + n + n * m; }

  /// Flat parameter vector [chol_M_inv, chol_K, chol_D, b, B (row-major)].
  Vec to_vector() const {
    Vec theta(parameter_count());
    const Eigen::Index t = triangular_size(n);
    theta.segment(0, t) = chol_M_inv;
    theta.segment(t, t) = chol_K;
    theta.segment(2 * t, t) = chol_D;
    theta.segment(3 * t, n) = b;
    Eigen::Index k = 3 * t + n;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < m; ++j) theta[k++] = B(i, j);
    return theta;
  }

  /// Same shape and offsets as *this, values from `theta`.
  ConParams with_vector(const Vec& theta) const {
    require_dim(theta.size(), parameter_count(), "parameter vector");
    ConParams p = *this;
    const Eigen::Index t = triangular_size(n);
    p.chol_M_inv = theta.segment(0, t);
    p.chol_K = theta.segment(t, t);
    p.chol_D = theta.segment(2 * t, t);
    p.b = theta.segment(3 * t, n);
    Eigen::Index k = 3 * t + n;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < m; ++j) p.B(i, j) = theta[k++];
    return p;
  }

  void validate() const {
    if (n <= 0) throw ParameterError("network dimension n must be positive");
    if (m < 0) throw ParameterError("input dimension m must be non-negative");
    require_dim(chol_M_inv.size(), triangular_size(n), "chol_M_inv");
    require_dim(chol_K.size(), triangular_size(n), "chol_K");
    require_dim(chol_D.size(), triangular_size(n), "chol_D");
    require_dim(b.size(), n, "b");
    require_dim(B.rows(), n, "B rows");
    require_dim(B.cols(), m, "B cols");
    if (!b.allFinite() || !B.allFinite()) throw ParameterError("non-finite b or B");
  }

  ConMatrices materialize() const {
    validate();
    return ConMatrices::from(isscon::materialize(chol_M_inv, n, eps1, eps2),
                             isscon::materialize(chol_K, n, eps1, eps2),
                             isscon::materialize(chol_D, n, eps1, eps2), b, B);
  }
};

// -----------------------------------------------------------------------------
// JSON
// -----------------------------------------------------------------------------

namespace detail {

inline void write_vec(std::ostream& os, const Vec& v) {
  os << '[';
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? "," : "") << format17(v[i]);
  os << ']';
}

inline void write_mat(std::ostream& os, const Mat& a) {
  os << '[';
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    os << (i ? "," : "") << '[';
    for (Eigen::Index j = 0; j < a.cols(); ++j) os << (j ? "," : "") << format17(a(i, j));
    os << ']';
  }
  os << ']';
}

inline Vec read_vec(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_array()) {
    throw ConfigError(std::string("missing array field '") + key + "'");
  }
  const auto& a = j.at(key);
  Vec v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

inline Mat read_mat(const nlohmann::json& j, const char* key, Eigen::Index rows, Eigen::Index cols) {
  if (!j.contains(key) || !j.at(key).is_array()) {
    throw ConfigError(std::string("missing matrix field '") + key + "'");
  }
  const auto& a = j.at(key);
  if (static_cast<Eigen::Index>(a.size()) != rows) {
    throw ConfigError(std::string("matrix '") + key + "' has wrong row count");
  }
  Mat out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = a[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw ConfigError(std::string("matrix '") + key + "' has wrong column count");
    }
    for (Eigen::Index c = 0; c < cols; ++c) out(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return out;
}

}  // namespace detail

/// {"n":..,"m":..,"chol_M_inv":[..],"chol_K":[..],"chol_D":[..],"b":[..],"B":[[..]]}
/// with every real printed with 17 significant digits.
inline std::string to_json_string(const ConParams& p) {
  std::ostringstream os;
  os << "{\"n\":" << p.n << ",\"m\":" << p.m << ",\"chol_M_inv\":";
  detail::write_vec(os, p.chol_M_inv);
  os << ",\"chol_K\":";
  detail::write_vec(os, p.chol_K);
  os << ",\"chol_D\":";
  detail::write_vec(os, p.chol_D);
  os << ",\"b\":";
  detail::write_vec(os, p.b);
  os << ",\"B\":";
  detail::write_mat(os, p.B);
  os << '}';
  return os.str();
}

inline ConParams con_params_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("network document must be a JSON object");
  ConParams p;
  try {
    p.n = j.at("n").get<Eigen::Index>();
    p.m = j.at("m").get<Eigen::Index>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("network document: ") + e.what());
  }
  p.chol_M_inv = detail::read_vec(j, "chol_M_inv");
  p.chol_K = detail::read_vec(j, "chol_K");
  p.chol_D = detail::read_vec(j, "chol_D");
  p.b = detail::read_vec(j, "b");
  p.B = p.m == 0 && (!j.contains("B") || j.at("B").empty()) ? Mat(p.n, 0)
                                                           : detail::read_mat(j, "B", p.n, p.m);
  if (j.contains("eps1")) p.eps1 = j.at("eps1").get<double>();
  if (j.contains("eps2")) p.eps2 = j.at("eps2").get<double>();
  try {
    p.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("network document: ") + e.what());
  }
  return p;
}

// -----------------------------------------------------------------------------
// Original chart
// -----------------------------------------------------------------------------

/// Network in its original coordinates:
///   mass .* x_ddot = B u - K x - D x_dot - tanh(W x + b).
/// `mass` defaults to ones (unit-mass convention).
struct OriginalConParams {
  Mat K;
  Mat D;
  Mat W;
  Vec b;
  Mat B;
  Vec mass;

  Eigen::Index n() const { return K.rows(); }
  Eigen::Index m() const { return B.cols(); }

  Vec masses() const { return mass.size() == 0 ? Vec::Ones(n()) : mass; }
};

inline Vec field_original(const OriginalConParams& p, const Vec& y, const Vec& u) {
  const Eigen::Index n = p.n();
  require_dim(y.size(), 2 * n, "state");
  require_dim(u.size(), p.m(), "input");
  const auto x = y.head(n);
  const auto xd = y.tail(n);
  Vec force = -p.K * x - p.D * xd - (p.W * x + p.b).array().tanh().matrix();
  if (p.m() > 0) force += p.B * u;
  Vec dy(2 * n);
  dy.head(n) = xd;
  if (p.mass.size() == 0) {
    dy.tail(n) = force;
  } else {
    dy.tail(n) = force.cwiseQuotient(p.mass);
  }
  return dy;
}

/// Largest-to-smallest singular value ratio above which W counts as singular.
inline constexpr double kMaxConditionW = 1e12;

inline double condition_number(const Mat& a) {
  Eigen::JacobiSVD<Mat> svd(a);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 1.0;
  const double lo = s[s.size() - 1];
  return lo > 0.0 ? s[0] / lo : std::numeric_limits<double>::infinity();
}

inline void require_full_rank_w(const OriginalConParams& p) {
  const double cond = condition_number(p.W);
  if (!(cond <= kMaxConditionW)) {
    throw SingularityError("W is rank deficient (condition number " + format17(cond) + ")", cond);
  }
}

inline SystemState to_w_coordinates(const OriginalConParams& p, const SystemState& y) {
  require_dim(y.n(), p.n(), "state");
  require_full_rank_w(p);
  return {p.W * y.x, p.W * y.x_dot};
}

inline SystemState from_w_coordinates(const OriginalConParams& p, const SystemState& y_w) {
  require_dim(y_w.n(), p.n(), "state");
  require_full_rank_w(p);
  const auto lu = p.W.partialPivLu();
  return {lu.solve(y_w.x), lu.solve(y_w.x_dot)};
}

/// W-chart matrices of an original-chart network: M_w = mass W^-1,
/// K_w = K W^-1, D_w = D W^-1. These are generally not symmetric; the result
/// is meant for evaluating the field, not for certification.
inline ConMatrices to_w_matrices(const OriginalConParams& p) {
  require_full_rank_w(p);
  const Mat w_inv = p.W.fullPivLu().inverse();
  const Vec mass = p.masses();
  ConMatrices c;
  c.M = mass.asDiagonal() * w_inv;
  c.M_inv = p.W * mass.cwiseInverse().asDiagonal();
  c.K = p.K * w_inv;
  c.D = p.D * w_inv;
  c.b = p.b;
  c.B = p.B;
  return c;
}

// -----------------------------------------------------------------------------
// W chart
// -----------------------------------------------------------------------------

/// (x_dot_w, M_w^-1 (tau - K_w x_w - D_w x_dot_w - tanh(x_w + b))).
/// `tau` is the already-mapped forcing g(u) in R^n.
inline Vec field_w(const ConMatrices& c, const Vec& y_w, const Vec& tau) {
  const Eigen::Index n = c.n();
  require_dim(y_w.size(), 2 * n, "state");
  require_dim(tau.size(), n, "forcing");
  const auto x = y_w.head(n);
  const auto xd = y_w.tail(n);
  Vec dy(2 * n);
  dy.head(n) = xd;
  dy.tail(n) = c.M_inv * (tau - c.K * x - c.D * xd - (x + c.b).array().tanh().matrix());
  return dy;
}

inline SystemState field_w(const ConMatrices& c, const SystemState& y_w, const Vec& tau) {
  return SystemState::from_flat(field_w(c, y_w.flat(), tau));
}

/// tau = B u, or zero forcing for an unactuated network.
inline Vec input_forcing(const ConMatrices& c, const Vec& u) {
  if (c.m() == 0 || u.size() == 0) return Vec::Zero(c.n());
  require_dim(u.size(), c.m(), "input");
  return c.B * u;
}

// -----------------------------------------------------------------------------
// Equilibrium
// -----------------------------------------------------------------------------

struct NewtonOptions {
  double tolerance = 1e-10;
  int max_iterations = 100;
};

inline Vec equilibrium_residual(const ConMatrices& c, const Vec& x) {
  return (x + c.b).array().tanh().matrix() + c.K * x;
}

/// Root of tanh(x + b) + K_w x = 0 by Newton's method with Jacobian
/// K_w + diag(sech^2(x + b)); the step is halved while the residual grows.
inline Vec solve_equilibrium(const ConMatrices& c, const Vec& start, NewtonOptions opt = {}) {
  const Eigen::Index n = c.n();
  require_dim(start.size(), n, "initial guess");
  Vec x = start;
  Vec r = equilibrium_residual(c, x);
  double rnorm = r.lpNorm<Eigen::Infinity>();
  for (int it = 0; it < opt.max_iterations && rnorm >= opt.tolerance; ++it) {
    Mat jac = c.K;
    const Eigen::ArrayXd th = (x + c.b).array().tanh();
    jac.diagonal().array() += 1.0 - th * th;
    const Vec step = jac.partialPivLu().solve(r);
    double scale = 1.0;
    Vec trial = x - step;
    Vec rt = equilibrium_residual(c, trial);
    double tnorm = rt.lpNorm<Eigen::Infinity>();
    for (int h = 0; h < 60 && !(tnorm < rnorm); ++h) {
      scale *= 0.5;
      trial = x - scale * step;
      rt = equilibrium_residual(c, trial);
      tnorm = rt.lpNorm<Eigen::Infinity>();
    }
    if (!(tnorm < rnorm) && !(tnorm < opt.tolerance)) break;
    x = std::move(trial);
    r = std::move(rt);
    rnorm = tnorm;
  }
  if (!(rnorm < opt.tolerance)) {
    throw NumericalError("equilibrium solver did not converge (residual " + format17(rnorm) + ")");
  }
  return x;
}

inline Vec solve_equilibrium(const ConMatrices& c) {
  return solve_equilibrium(c, Vec::Zero(c.n()));
}

// -----------------------------------------------------------------------------
// Potential
// -----------------------------------------------------------------------------

/// K_w (x_bar + x_tilde) + tanh(x_bar + x_tilde + b).
inline Vec potential_force(const ConMatrices& c, const Vec& x_bar, const Vec& x_tilde) {
  require_dim(x_bar.size(), c.n(), "equilibrium");
  require_dim(x_tilde.size(), c.n(), "displacement");
  const Vec x = x_bar + x_tilde;
  return c.K * x + (x + c.b).array().tanh().matrix();
}

/// Jacobian of potential_force: K_w + diag(sech^2(x_bar + x_tilde + b)).
inline Mat potential_stiffness(const ConMatrices& c, const Vec& x_bar, const Vec& x_tilde) {
  Mat h = c.K;
  const Eigen::ArrayXd th = (x_bar + x_tilde + c.b).array().tanh();
  h.diagonal().array() += 1.0 - th * th;
  return h;
}

/// Sum_i lcosh(x_bar_i + x_tilde_i + b_i) - lcosh(x_bar_i + b_i)
///       - tanh(x_bar_i + b_i) x_tilde_i.
inline double tanh_potential_sum(const Vec& x_bar, const Vec& x_tilde, const Vec& b) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < x_tilde.size(); ++i) {
    s += tanh_potential(x_bar[i] + b[i], x_tilde[i]);
  }
  return s;
}

/// Potential energy relative to the equilibrium:
///   U_w = tanh part + 1/2 x_tilde^T K_w x_tilde + x_tilde^T r,
/// with r = K_w x_bar + tanh(x_bar + b) the equilibrium residual (zero up to
/// solver tolerance). Its gradient equals potential_force exactly and U_w(0) = 0.
inline double potential_energy(const ConMatrices& c, const Vec& x_bar, const Vec& x_tilde) {
  require_dim(x_bar.size(), c.n(), "equilibrium");
  require_dim(x_tilde.size(), c.n(), "displacement");
  const Vec residual = equilibrium_residual(c, x_bar);
  return tanh_potential_sum(x_bar, x_tilde, c.b) + 0.5 * x_tilde.dot(c.K * x_tilde) +
         x_tilde.dot(residual);
}

}  // namespace isscon
