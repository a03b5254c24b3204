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

// Lyapunov / ISS certificates for CON networks in W-coordinates.

#pragma once

#include <json.hpp>

#include <iomanip>
#include <ostream>
#include <string>

#include "isscon/con.hpp"

namespace isscon {

/// Smallest eigenvalue threshold for the positive-definiteness test.
inline constexpr double kPdEigenFloor = 1e-12;

struct EigenRange {
  double min = 0.0;
  double max = 0.0;
};

inline EigenRange eigen_range(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (a + a.transpose()), Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  return {ev.minCoeff(), ev.maxCoeff()};
}

/// Largest singular value.
inline double spectral_norm(const Mat& a) {
  if (a.rows() == a.cols() && (a - a.transpose()).isZero(0.0)) {
    const EigenRange r = eigen_range(a);
    return std::max(std::abs(r.min), std::abs(r.max));
  }
  const EigenRange r = eigen_range(a.transpose() * a);
  return std::sqrt(std::max(r.max, 0.0));
}

/// Cholesky succeeds and the smallest eigenvalue exceeds kPdEigenFloor.
inline bool is_positive_definite(const Mat& a) {
  if (a.rows() != a.cols() || !a.allFinite()) return false;
  if ((a - a.transpose()).norm() > 1e-12 * (1.0 + a.norm())) return false;
  Eigen::LLT<Mat> llt(a);
  if (llt.info() != Eigen::Success) return false;
  return eigen_range(a).min > kPdEigenFloor;
}

/// sqrt(lambda_min(M_w) lambda_min(K_w)) / ||M_w||.
inline double mu_v_bound(const Mat& M, const Mat& K) {
  return std::sqrt(eigen_range(M).min * eigen_range(K).min) / spectral_norm(M);
}

/// lambda_min(D_w) / (lambda_min(M_w) + ||D_w||^2 / (4 lambda_min(K_w))).
inline double mu_vdot_bound(const Mat& M, const Mat& K, const Mat& D) {
  const double dn = spectral_norm(D);
  return eigen_range(D).min / (eigen_range(M).min + dn * dn / (4.0 * eigen_range(K).min));
}

inline double mu_v_bound(const ConMatrices& c) {
  if (!is_positive_definite(c.M) || !is_positive_definite(c.K)) {
    throw PreconditionError("mu_V bound requires M_w, K_w positive definite");
  }
  return mu_v_bound(c.M, c.K);
}

inline double mu_vdot_bound(const ConMatrices& c) {
  if (!is_positive_definite(c.M) || !is_positive_definite(c.K) || !is_positive_definite(c.D)) {
    throw PreconditionError("mu_Vdot bound requires M_w, K_w, D_w positive definite");
  }
  return mu_vdot_bound(c.M, c.K, c.D);
}

/// [[K_w, mu M_w], [mu M_w^T, M_w]].
inline Mat lyapunov_matrix(const ConMatrices& c, double mu) {
  const Eigen::Index n = c.n();
  Mat p(2 * n, 2 * n);
  p << c.K, mu * c.M, mu * c.M.transpose(), c.M;
  return p;
}

/// [[mu K_w, mu/2 D_w], [mu/2 D_w^T, D_w - mu M_w]].
inline Mat dissipation_matrix(const ConMatrices& c, double mu) {
  const Eigen::Index n = c.n();
  Mat p(2 * n, 2 * n);
  p << mu * c.K, 0.5 * mu * c.D, 0.5 * mu * c.D.transpose(), c.D - mu * c.M;
  return p;
}

struct StabilityCertificate {
  bool valid = false;
  std::string failure;

  bool pd_M = false;
  bool pd_K = false;
  bool pd_D = false;

  EigenRange eig_M;
  EigenRange eig_K;
  EigenRange eig_D;
  EigenRange eig_P_V;
  EigenRange eig_P_Vdot;

  double mu_V = 0.0;
  double mu_Vdot = 0.0;
  double mu = 0.0;
  double theta = 0.5;
  /// Number of times mu was halved below the midpoint choice to keep
  /// P_Vdot positive definite.
  int mu_reductions = 0;

  Vec equilibrium;
  Eigen::Index n = 0;
};

/// Checks M_w, K_w, D_w, picks mu = 0.5 min(mu_V, mu_Vdot) and solves for the
/// equilibrium. A violated hypothesis yields valid == false and a message
/// naming the matrix, never an exception.
inline StabilityCertificate certify(const ConMatrices& c, double theta = 0.5) {
  StabilityCertificate cert;
  cert.n = c.n();
  cert.theta = theta;
  if (!(theta > 0.0 && theta < 1.0)) {
    cert.failure = "theta must lie in (0, 1)";
    return cert;
  }
  cert.pd_M = is_positive_definite(c.M) && is_positive_definite(c.M_inv);
  cert.pd_K = is_positive_definite(c.K);
  cert.pd_D = is_positive_definite(c.D);
  if (c.M.allFinite()) cert.eig_M = eigen_range(c.M);
  if (c.K.allFinite()) cert.eig_K = eigen_range(c.K);
  if (c.D.allFinite()) cert.eig_D = eigen_range(c.D);
  if (!cert.pd_M) cert.failure = "M_w is not positive definite";
  else if (!cert.pd_K) cert.failure = "K_w is not positive definite";
  else if (!cert.pd_D) cert.failure = "D_w is not positive definite";
  if (!cert.failure.empty()) return cert;

  cert.mu_V = mu_v_bound(c.M, c.K);
  cert.mu_Vdot = mu_vdot_bound(c.M, c.K, c.D);
  cert.mu = 0.5 * std::min(cert.mu_V, cert.mu_Vdot);
  // The mu_Vdot bound is stated with lambda_min(M_w); for ill-conditioned
  // M_w the Schur complement of P_Vdot can still be indefinite at the
  // midpoint, so shrink mu until both matrices are PD.
  for (; cert.mu_reductions < 200; ++cert.mu_reductions) {
    cert.eig_P_V = eigen_range(lyapunov_matrix(c, cert.mu));
    cert.eig_P_Vdot = eigen_range(dissipation_matrix(c, cert.mu));
    if (cert.eig_P_V.min > 0.0 && cert.eig_P_Vdot.min > 0.0) break;
    cert.mu *= 0.5;
  }
  if (!(cert.eig_P_V.min > 0.0 && cert.eig_P_Vdot.min > 0.0)) {
    cert.failure = "no admissible mu keeps P_V and P_Vdot positive definite";
    return cert;
  }
  try {
    cert.equilibrium = solve_equilibrium(c);
  } catch (const NumericalError& e) {
    cert.failure = e.what();
    return cert;
  }
  cert.valid = true;
  return cert;
}

inline void require_valid(const StabilityCertificate& cert) {
  if (!cert.valid) throw PreconditionError("invalid stability certificate: " + cert.failure);
}

/// V_mu(y~) = 1/2 y~^T P_V y~ + sum_i [lcosh(x_bar+x~+b) - lcosh(x_bar+b) - tanh(x_bar+b) x~].
inline double lyapunov_value(const ConMatrices& c, const StabilityCertificate& cert,
                             const Vec& y_tilde) {
  require_valid(cert);
  const Eigen::Index n = c.n();
  require_dim(y_tilde.size(), 2 * n, "residual state");
  const auto x = y_tilde.head(n);
  const auto xd = y_tilde.tail(n);
  const double quad = x.dot(c.K * x) + 2.0 * cert.mu * x.dot(c.M * xd) + xd.dot(c.M * xd);
  return 0.5 * quad + tanh_potential_sum(cert.equilibrium, x, c.b);
}

/// Residual dynamics about the equilibrium under forcing tau.
inline Vec residual_field(const ConMatrices& c, const StabilityCertificate& cert,
                          const Vec& y_tilde, const Vec& tau) {
  const Eigen::Index n = c.n();
  Vec y_w(2 * n);
  y_w << cert.equilibrium + y_tilde.head(n), y_tilde.tail(n);
  return field_w(c, y_w, tau);
}

/// Gradient of V_mu with respect to the residual state.
inline Vec lyapunov_gradient(const ConMatrices& c, const StabilityCertificate& cert,
                             const Vec& y_tilde) {
  const Eigen::Index n = c.n();
  Vec g = lyapunov_matrix(c, cert.mu) * y_tilde;
  const Vec a = cert.equilibrium + c.b;
  g.head(n).array() += (a + y_tilde.head(n)).array().tanh() - a.array().tanh();
  return g;
}

/// dV_mu/dt = grad V . f~_w(y~, tau).
inline double lyapunov_rate(const ConMatrices& c, const StabilityCertificate& cert,
                            const Vec& y_tilde, const Vec& tau) {
  require_valid(cert);
  require_dim(y_tilde.size(), 2 * c.n(), "residual state");
  require_dim(tau.size(), c.n(), "forcing");
  return lyapunov_gradient(c, cert, y_tilde).dot(residual_field(c, cert, y_tilde, tau));
}

/// ISS gain
///   gamma(r) = sqrt(((1+mu^2) lM(P_V) r^2 + 4 theta sqrt(n) sqrt(1+mu^2) lm(P_Vdot) r)
///                   / (theta^2 lm(P_V) lm(P_Vdot)^2)).
inline double iss_gain(const StabilityCertificate& cert, double r) {
  require_valid(cert);
  if (!(r >= 0.0)) throw PreconditionError("ISS gain needs r >= 0");
  const double mu2 = 1.0 + cert.mu * cert.mu;
  const double lmv = cert.eig_P_Vdot.min;
  const double num = mu2 * cert.eig_P_V.max * r * r +
                     4.0 * cert.theta * std::sqrt(static_cast<double>(cert.n)) * std::sqrt(mu2) * lmv * r;
  const double den = cert.theta * cert.theta * cert.eig_P_V.min * lmv * lmv;
  return std::sqrt(num / den);
}

/// Lower / upper sandwich functions alpha_1, alpha_2 of V_mu.
inline double lyapunov_lower_bound(const StabilityCertificate& cert, double r) {
  return 0.5 * cert.eig_P_V.min * r * r;
}

inline double lyapunov_upper_bound(const StabilityCertificate& cert, double r) {
  return 0.5 * cert.eig_P_V.max * r * r + 2.0 * std::sqrt(static_cast<double>(cert.n)) * r;
}

/// Dissipation bound -lm(P_Vdot) ||y~||^2 + sqrt(1+mu^2) ||y~|| ||tau||.
inline double dissipation_bound(const StabilityCertificate& cert, double y_norm, double tau_norm) {
  return -cert.eig_P_Vdot.min * y_norm * y_norm +
         std::sqrt(1.0 + cert.mu * cert.mu) * y_norm * tau_norm;
}

// -----------------------------------------------------------------------------
// Reporting
// -----------------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const StabilityCertificate& cert) {
  auto range = [](const EigenRange& r) {
    return nlohmann::ordered_json{{"min", r.min}, {"max", r.max}};
  };
  nlohmann::ordered_json j;
  j["valid"] = cert.valid;
  j["failure"] = cert.failure;
  j["pd_ok"] = {{"M_w", cert.pd_M}, {"K_w", cert.pd_K}, {"D_w", cert.pd_D}};
  j["eig"] = {{"M_w", range(cert.eig_M)},
              {"K_w", range(cert.eig_K)},
              {"D_w", range(cert.eig_D)},
              {"P_V", range(cert.eig_P_V)},
              {"P_Vdot", range(cert.eig_P_Vdot)}};
  j["mu_V"] = cert.mu_V;
  j["mu_Vdot"] = cert.mu_Vdot;
  j["mu"] = cert.mu;
  j["mu_reductions"] = cert.mu_reductions;
  j["theta"] = cert.theta;
  std::vector<double> eq(cert.equilibrium.data(), cert.equilibrium.data() + cert.equilibrium.size());
  j["equilibrium"] = eq;
  return j;
}

inline void print_certificate(std::ostream& os, const StabilityCertificate& cert) {
  auto row = [&os](const char* name, const std::string& value) {
    os << "  " << std::left << std::setw(22) << name << value << '\n';
  };
  auto yes = [](bool b) { return std::string(b ? "yes" : "NO"); };
  auto range = [](const EigenRange& r) { return "[" + format17(r.min) + ", " + format17(r.max) + "]"; };
  os << "stability certificate (n = " << cert.n << ")\n";
  row("valid", yes(cert.valid) + (cert.valid ? "" : " (" + cert.failure + ")"));
  row("M_w PD", yes(cert.pd_M));
  row("K_w PD", yes(cert.pd_K));
  row("D_w PD", yes(cert.pd_D));
  row("eig M_w", range(cert.eig_M));
  row("eig K_w", range(cert.eig_K));
  row("eig D_w", range(cert.eig_D));
  if (!cert.valid) return;
  row("eig P_V", range(cert.eig_P_V));
  row("eig P_Vdot", range(cert.eig_P_Vdot));
  row("mu_V", format17(cert.mu_V));
  row("mu_Vdot", format17(cert.mu_Vdot));
  row("mu", format17(cert.mu));
  row("theta", format17(cert.theta));
}

}  // namespace isscon
