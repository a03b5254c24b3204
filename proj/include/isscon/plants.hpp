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

// Ground-truth mechanical plants: a damped mass-spring, single and double
// pendula with joint damping, and a planar piecewise-constant-strain soft
// robot hanging under gravity.

#pragma once

#include <cmath>
#include <complex>
#include <string>
#include <variant>
#include <vector>

#include "isscon/integrators.hpp"

namespace isscon {

// -----------------------------------------------------------------------------
// Toy plants
// -----------------------------------------------------------------------------

struct MassSpringParams {
  double mass = 0.5;
  double stiffness = 2.0;
  double damping = 0.05;

  void validate() const {
    if (!(mass > 0.0 && stiffness > 0.0 && damping > 0.0)) {
      throw ParameterError("mass-spring parameters must be positive");
    }
  }
};

/// Point-mass bob on a massless link; angle 0 hangs straight down.
struct PendulumParams {
  double mass = 0.5;
  double length = 1.0;
  double gravity = 3.0;
  double damping = 0.05;

  void validate() const {
    if (!(mass > 0.0 && length > 0.0 && gravity > 0.0 && damping > 0.0)) {
      throw ParameterError("pendulum parameters must be positive");
    }
  }
};

/// Two identical links; q = (absolute angle of link 1, angle of link 2
/// relative to link 1), each joint with its own viscous damper.
struct DoublePendulumParams {
  double mass = 0.5;
  double length = 1.0;
  double gravity = 3.0;
  double damping = 0.05;

  void validate() const {
    if (!(mass > 0.0 && length > 0.0 && gravity > 0.0 && damping > 0.0)) {
      throw ParameterError("double pendulum parameters must be positive");
    }
  }
};

inline Vec input_or_zero(const Vec& u, Eigen::Index m) {
  if (u.size() == 0) return Vec::Zero(m);
  require_dim(u.size(), m, "plant input");
  return u;
}

inline Vec mass_spring_field(const MassSpringParams& p, const Vec& y, const Vec& u = {}) {
  require_dim(y.size(), 2, "mass-spring state");
  const Vec f = input_or_zero(u, 1);
  Vec dy(2);
  dy << y[1], (f[0] - p.stiffness * y[0] - p.damping * y[1]) / p.mass;
  return dy;
}

inline double mass_spring_energy(const MassSpringParams& p, const Vec& y) {
  return 0.5 * p.mass * y[1] * y[1] + 0.5 * p.stiffness * y[0] * y[0];
}

inline Vec pendulum_field(const PendulumParams& p, const Vec& y, const Vec& u = {}) {
  require_dim(y.size(), 2, "pendulum state");
  const Vec tau = input_or_zero(u, 1);
  const double inertia = p.mass * p.length * p.length;
  Vec dy(2);
  dy << y[1],
      (tau[0] - p.mass * p.gravity * p.length * std::sin(y[0]) - p.damping * y[1]) / inertia;
  return dy;
}

inline double pendulum_energy(const PendulumParams& p, const Vec& y) {
  const double l = p.length;
  return 0.5 * p.mass * l * l * y[1] * y[1] + p.mass * p.gravity * l * (1.0 - std::cos(y[0]));
}

inline Mat double_pendulum_mass(const DoublePendulumParams& p, const Vec& q) {
  const double m = p.mass, l = p.length;
  const double c2 = std::cos(q[1]);
  Mat M(2, 2);
  M(0, 0) = 2.0 * m * l * l + m * l * l + 2.0 * m * l * l * c2;
  M(0, 1) = m * l * l + m * l * l * c2;
  M(1, 0) = M(0, 1);
  M(1, 1) = m * l * l;
  return M;
}

inline Vec double_pendulum_field(const DoublePendulumParams& p, const Vec& y, const Vec& u = {}) {
  require_dim(y.size(), 4, "double pendulum state");
  const Vec tau = input_or_zero(u, 2);
  const double m = p.mass, l = p.length, g = p.gravity;
  const Vec q = y.head(2), qd = y.tail(2);
  const Mat M = double_pendulum_mass(p, q);
  const double h = m * l * l * std::sin(q[1]);
  Vec rhs(2);
  rhs[0] = tau[0] + h * (2.0 * qd[0] * qd[1] + qd[1] * qd[1]) -
           2.0 * m * g * l * std::sin(q[0]) - m * g * l * std::sin(q[0] + q[1]) - p.damping * qd[0];
  rhs[1] = tau[1] - h * qd[0] * qd[0] - m * g * l * std::sin(q[0] + q[1]) - p.damping * qd[1];
  Eigen::LLT<Mat> llt(M);
  if (llt.info() != Eigen::Success) throw NumericalError("double pendulum mass matrix not PD");
  Vec dy(4);
  dy << qd, llt.solve(rhs);
  return dy;
}

/// Kinetic plus potential energy, zero at the hanging rest state.
inline double double_pendulum_energy(const DoublePendulumParams& p, const Vec& y) {
  const double m = p.mass, l = p.length, g = p.gravity;
  const Vec q = y.head(2), qd = y.tail(2);
  const double T = 0.5 * qd.dot(double_pendulum_mass(p, q) * qd);
  const double U = 2.0 * m * g * l * (1.0 - std::cos(q[0])) + m * g * l * (1.0 - std::cos(q[0] + q[1]));
  return T + U;
}

// -----------------------------------------------------------------------------
// Gauss-Legendre quadrature
// -----------------------------------------------------------------------------

struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Nodes and weights on [0, 1], exact for polynomials of degree 2n - 1.
inline Quadrature gauss_legendre(int n) {
  if (n < 1) throw ParameterError("quadrature order must be >= 1");
  Quadrature q;
  q.nodes.resize(n);
  q.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    // Map [-1, 1] -> [0, 1] in ascending order.
    q.nodes[n - 1 - i] = 0.5 * (x + 1.0);
    q.weights[n - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
  }
  return q;
}

// -----------------------------------------------------------------------------
// Planar PCS soft robot
// -----------------------------------------------------------------------------

enum class StrainMode { BendingOnly, FullPlanarStrain };

inline std::string to_string(StrainMode m) {
  return m == StrainMode::BendingOnly ? "bending" : "full";
}

inline StrainMode strain_mode_from_string(const std::string& s) {
  if (s == "bending") return StrainMode::BendingOnly;
  if (s == "full") return StrainMode::FullPlanarStrain;
  throw ConfigError("unknown strain mode '" + s + "' (expected bending or full)");
}

struct PccParams {
  int segments = 2;
  double length = 0.1;
  double diameter = 0.02;
  double density = 600.0;
  double youngs_modulus = 2e4;
  double shear_modulus = 1e4;
  double damping_bending = 1e-5;
  double damping_shear = 0.01;
  double damping_axial = 0.01;
  double gravity = 9.81;
  StrainMode strain_mode = StrainMode::BendingOnly;
  int quadrature_order = 10;

  int strains_per_segment() const { return strain_mode == StrainMode::BendingOnly ? 1 : 3; }
  int dof() const { return segments * strains_per_segment(); }
  double area() const { return M_PI * diameter * diameter / 4.0; }
  double second_moment() const { return M_PI * std::pow(diameter, 4) / 64.0; }
  double linear_density() const { return density * area(); }

  void validate() const {
    if (segments < 1) throw ParameterError("PCC robot needs at least one segment");
    if (!(length > 0.0 && diameter > 0.0 && density > 0.0 && youngs_modulus > 0.0 &&
          shear_modulus > 0.0 && damping_bending > 0.0 && damping_shear > 0.0 &&
          damping_axial > 0.0 && gravity > 0.0)) {
      throw ParameterError("PCC parameters must be positive");
    }
    if (quadrature_order < 5) throw ParameterError("PCC quadrature order must be >= 5");
  }
};

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
};

struct PccDynamics {
  Mat B;
  Mat C;
  Vec G;
  Mat K;
  Mat D;
};

namespace detail {

using cplx = std::complex<double>;

/// E(z) = (e^z - 1) / z and its derivative E'(z) = sum_j (j + 1) z^j / (j + 2)!,
/// by series near the origin and in closed form elsewhere.
struct ArcTerms {
  cplx e;
  cplx e_prime;
};

inline ArcTerms arc_terms(cplx z) {
  const double az = std::abs(z);
  if (az < 0.5) {
    // term_j = z^j / (j + 2)!; E = sum (j + 2) term_j, E' = sum (j + 1) term_j.
    cplx e = 0.0, ep = 0.0, term = 0.5;
    for (int j = 0; j < 30; ++j) {
      e += static_cast<double>(j + 2) * term;
      ep += static_cast<double>(j + 1) * term;
      term *= z / static_cast<double>(j + 3);
      if (std::abs(term) < 1e-18) break;
    }
    return {e, ep};
  }
  const cplx ez = std::exp(z);
  const cplx e = (ez - 1.0) / z;
  return {e, (ez - e) / z};
}

inline cplx arc_e(cplx z) { return arc_terms(z).e; }
inline cplx arc_e_prime(cplx z) { return arc_terms(z).e_prime; }

}  // namespace detail

/// Planar piecewise-constant-strain robot. Each segment carries bending
/// curvature kappa and, in full-strain mode, shear and axial strain. The base
/// is clamped at the origin pointing down (-y); gravity acts along -y.
class PccRobot {
 public:
  explicit PccRobot(PccParams p = {}) : p_(p) {
    p_.validate();
    quad_ = gauss_legendre(p_.quadrature_order);
    const int n = dof(), s = p_.strains_per_segment();
    K_ = Mat::Zero(n, n);
    D_ = Mat::Zero(n, n);
    const double L = p_.length;
    const double kd[3] = {p_.youngs_modulus * p_.second_moment() * L,
                          p_.shear_modulus * p_.area() * L, p_.youngs_modulus * p_.area() * L};
    const double dd[3] = {p_.damping_bending * L, p_.damping_shear * L, p_.damping_axial * L};
    for (int i = 0; i < p_.segments; ++i) {
      for (int k = 0; k < s; ++k) {
        K_(i * s + k, i * s + k) = kd[k];
        D_(i * s + k, i * s + k) = dd[k];
      }
    }
  }

  const PccParams& params() const { return p_; }
  int dof() const { return p_.dof(); }
  const Mat& stiffness() const { return K_; }
  const Mat& damping() const { return D_; }

  /// Pose at arclength fraction s in [0, 1] of the whole backbone.
  Pose forward_kinematics(const Vec& q, double s) const {
    check_q(q);
    if (!(s >= 0.0 && s <= 1.0)) throw PreconditionError("arclength fraction must lie in [0, 1]");
    const Frames f = frames(q);
    const auto [seg, sl] = locate(s);
    const detail::cplx pos = point(f, seg, sl);
    return {pos.real(), pos.imag(), f.theta[seg] + f.kappa[seg] * sl};
  }

  /// d(x, y)/dq at arclength fraction s, 2 x dof.
  Mat position_jacobian(const Vec& q, double s) const {
    check_q(q);
    if (!(s >= 0.0 && s <= 1.0)) throw PreconditionError("arclength fraction must lie in [0, 1]");
    const Frames f = frames(q);
    const auto [seg, sl] = locate(s);
    std::vector<detail::cplx> jc(dof());
    point_jacobian(f, seg, sl, jc);
    Mat J(2, dof());
    for (int j = 0; j < dof(); ++j) {
      J(0, j) = jc[j].real();
      J(1, j) = jc[j].imag();
    }
    return J;
  }

  Mat inertia(const Vec& q) const {
    Mat B;
    integrate(q, &B, nullptr);
    return B;
  }

  /// dU_gravity/dq.
  Vec gravity_vector(const Vec& q) const {
    Vec G;
    integrate(q, nullptr, &G);
    return G;
  }

  /// Gravitational potential, zero for the straight configuration.
  double gravity_potential(const Vec& q) const {
    check_q(q);
    const double L = p_.length;
    double acc = 0.0;
    const Frames f = frames(q);
    for (int seg = 0; seg < p_.segments; ++seg) {
      for (std::size_t k = 0; k < quad_.nodes.size(); ++k) {
        const double sl = quad_.nodes[k] * L;
        const double y_straight = -(seg * L + sl);
        acc += quad_.weights[k] * L * (point(f, seg, sl).imag() - y_straight);
      }
    }
    return p_.linear_density() * p_.gravity * acc;
  }

  /// dB/dq_k by central differences with step h, one matrix per k.
  std::vector<Mat> inertia_derivatives(const Vec& q, double h = 1e-6) const {
    std::vector<Mat> dB(dof());
    for (int k = 0; k < dof(); ++k) {
      Vec qp = q, qm = q;
      qp[k] += h;
      qm[k] -= h;
      dB[k] = (inertia(qp) - inertia(qm)) / (2.0 * h);
    }
    return dB;
  }

  /// Christoffel-symbol Coriolis matrix: C_ij = sum_k G_ijk qd_k with
  /// G_ijk = (dB_ij/dq_k + dB_ik/dq_j - dB_jk/dq_i) / 2.
  static Mat coriolis_from(const std::vector<Mat>& dB, const Vec& qd) {
    const Eigen::Index n = qd.size();
    Mat C = Mat::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        double c = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
          c += 0.5 * (dB[k](i, j) + dB[j](i, k) - dB[i](j, k)) * qd[k];
        }
        C(i, j) = c;
      }
    }
    return C;
  }

  Mat coriolis(const Vec& q, const Vec& qd) const {
    require_dim(qd.size(), dof(), "PCC velocity");
    return coriolis_from(inertia_derivatives(q), qd);
  }

  PccDynamics dynamics(const Vec& q, const Vec& qd) const {
    PccDynamics d{Mat(), coriolis(q, qd), Vec(), K_, D_};
    integrate(q, &d.B, &d.G);
    return d;
  }

  Vec field(const Vec& y, const Vec& u = {}) const {
    const int n = dof();
    require_dim(y.size(), 2 * n, "PCC state");
    const Vec tau = input_or_zero(u, n);
    const Vec q = y.head(n), qd = y.tail(n);
    Mat B;
    Vec G;
    integrate(q, &B, &G);
    const Vec rhs = tau - coriolis(q, qd) * qd - G - K_ * q - D_ * qd;
    Eigen::LLT<Mat> llt(B);
    if (llt.info() != Eigen::Success) throw NumericalError("PCC inertia matrix not PD");
    Vec dy(2 * n);
    dy << qd, llt.solve(rhs);
    return dy;
  }

  double kinetic_energy(const Vec& y) const {
    const int n = dof();
    const Vec q = y.head(n), qd = y.tail(n);
    return 0.5 * qd.dot(inertia(q) * qd);
  }

  double potential_energy(const Vec& q) const {
    return gravity_potential(q) + 0.5 * q.dot(K_ * q);
  }

  double energy(const Vec& y) const {
    return kinetic_energy(y) + potential_energy(y.head(dof()));
  }

  /// Per-segment strain bound used to size the actuation: 5 pi rad/m of
  /// bending and 0.2 of shear and axial strain.
  Vec strain_bound() const {
    const int s = p_.strains_per_segment();
    Vec qmax(dof());
    for (int i = 0; i < p_.segments; ++i) {
      qmax[i * s] = 5.0 * M_PI;
      if (s == 3) {
        qmax[i * s + 1] = 0.2;
        qmax[i * s + 2] = 0.2;
      }
    }
    return qmax;
  }

  /// u_max = |G(q_max) + K q_max|, elementwise.
  Vec actuation_bound() const {
    const Vec qmax = strain_bound();
    return (gravity_vector(qmax) + K_ * qmax).cwiseAbs();
  }

  /// u ~ U(-u_max, u_max) elementwise.
  Vec sample_actuation(std::uint64_t seed) const {
    CounterRng rng(seed);
    return sample_actuation(rng);
  }

  Vec sample_actuation(CounterRng& rng) const {
    const Vec umax = actuation_bound();
    Vec u(dof());
    for (int i = 0; i < dof(); ++i) u[i] = rng.uniform(-umax[i], umax[i]);
    return u;
  }

 private:
  struct Frames {
    std::vector<detail::cplx> base;  // P_i, segment base positions
    std::vector<double> theta;       // Theta_i, base orientations
    std::vector<detail::cplx> rot;   // exp(i Theta_i)
    std::vector<double> kappa;
    std::vector<detail::cplx> c;     // sigma_sh - i (1 + sigma_ax)
    std::vector<detail::ArcTerms> full;  // arc terms at i kappa_i L
  };

  void check_q(const Vec& q) const { require_dim(q.size(), dof(), "PCC configuration"); }

  std::pair<int, double> locate(double s) const {
    const double x = s * p_.segments;
    const int seg = std::min(static_cast<int>(std::floor(x)), p_.segments - 1);
    return {seg, (x - seg) * p_.length};
  }

  Frames frames(const Vec& q) const {
    const int nb = p_.segments, s = p_.strains_per_segment();
    const double L = p_.length;
    Frames f;
    f.base.resize(nb + 1);
    f.theta.resize(nb + 1);
    f.rot.resize(nb + 1);
    f.kappa.resize(nb);
    f.c.resize(nb);
    f.full.resize(nb);
    f.base[0] = 0.0;
    f.theta[0] = 0.0;
    f.rot[0] = 1.0;
    for (int i = 0; i < nb; ++i) {
      f.kappa[i] = q[i * s];
      const double sh = s == 3 ? q[i * s + 1] : 0.0;
      const double ax = s == 3 ? q[i * s + 2] : 0.0;
      f.c[i] = detail::cplx(sh, -(1.0 + ax));
      f.full[i] = detail::arc_terms({0.0, f.kappa[i] * L});
      f.base[i + 1] = f.base[i] + f.c[i] * f.rot[i] * L * f.full[i].e;
      f.theta[i + 1] = f.theta[i] + f.kappa[i] * L;
      f.rot[i + 1] = std::polar(1.0, f.theta[i + 1]);
    }
    return f;
  }

  static detail::cplx point(const Frames& f, int seg, double sl) {
    return f.base[seg] + f.c[seg] * f.rot[seg] * sl * detail::arc_e({0.0, f.kappa[seg] * sl});
  }

  /// Complex Jacobian d(x + i y)/dq of the backbone point (seg, sl).
  void point_jacobian(const Frames& f, int seg, double sl, std::vector<detail::cplx>& jc) const {
    using detail::cplx;
    const int s = p_.strains_per_segment();
    const double L = p_.length;
    const cplx I(0.0, 1.0);
    std::fill(jc.begin(), jc.end(), cplx(0.0));
    const detail::ArcTerms local = detail::arc_terms({0.0, f.kappa[seg] * sl});
    const cplx pos = f.base[seg] + f.c[seg] * f.rot[seg] * sl * local.e;
    for (int j = 0; j <= seg; ++j) {
      const bool inner = j < seg;
      const double len = inner ? L : sl;
      const detail::ArcTerms& at = inner ? f.full[j] : local;
      cplx dk = f.c[j] * f.rot[j] * len * I * len * at.e_prime;
      if (inner) dk += I * L * (pos - f.base[j + 1]);
      jc[j * s] = dk;
      if (s == 3) {
        jc[j * s + 1] = f.rot[j] * len * at.e;
        jc[j * s + 2] = -I * f.rot[j] * len * at.e;
      }
    }
  }

  /// Quadrature of rho A J^T J (into B) and rho A g Im(J) (into G) along
  /// the backbone.
  void integrate(const Vec& q, Mat* B, Vec* G) const {
    check_q(q);
    const int n = dof();
    const Frames f = frames(q);
    const double L = p_.length;
    std::vector<detail::cplx> jc(n);
    if (B) B->setZero(n, n);
    if (G) G->setZero(n);
    for (int seg = 0; seg < p_.segments; ++seg) {
      for (std::size_t k = 0; k < quad_.nodes.size(); ++k) {
        point_jacobian(f, seg, quad_.nodes[k] * L, jc);
        const double w = quad_.weights[k] * L;
        // Only coordinates of segments up to `seg` move this point.
        const int active = (seg + 1) * p_.strains_per_segment();
        if (B) {
          for (int a = 0; a < active; ++a)
            for (int b = a; b < active; ++b)
              (*B)(a, b) += w * (jc[a].real() * jc[b].real() + jc[a].imag() * jc[b].imag());
        }
        if (G) {
          for (int a = 0; a < active; ++a) (*G)[a] += w * jc[a].imag();
        }
      }
    }
    if (B) {
      *B *= p_.linear_density();
      B->triangularView<Eigen::StrictlyLower>() = B->transpose().triangularView<Eigen::StrictlyLower>();
    }
    if (G) *G *= p_.linear_density() * p_.gravity;
  }

  PccParams p_;
  Quadrature quad_;
  Mat K_;
  Mat D_;
};

// -----------------------------------------------------------------------------
// Plant model
// -----------------------------------------------------------------------------

enum class PlantKind { MassSpring, Pendulum, DoublePendulum, PccRobot };

inline std::string to_string(PlantKind k) {
  switch (k) {
    case PlantKind::MassSpring: return "mass_spring";
    case PlantKind::Pendulum: return "pendulum";
    case PlantKind::DoublePendulum: return "double_pendulum";
    case PlantKind::PccRobot: return "pcc";
  }
  return "?";
}

inline PlantKind plant_kind_from_string(const std::string& s) {
  if (s == "mass_spring") return PlantKind::MassSpring;
  if (s == "pendulum") return PlantKind::Pendulum;
  if (s == "double_pendulum") return PlantKind::DoublePendulum;
  if (s == "pcc") return PlantKind::PccRobot;
  throw ConfigError("unknown plant kind '" + s + "'");
}

class PlantModel {
 public:
  using Params = std::variant<MassSpringParams, PendulumParams, DoublePendulumParams, PccRobot>;

  PlantModel(MassSpringParams p) : params_(p) { p.validate(); }
  PlantModel(PendulumParams p) : params_(p) { p.validate(); }
  PlantModel(DoublePendulumParams p) : params_(p) { p.validate(); }
  PlantModel(PccParams p) : params_(PccRobot(p)) {}

  PlantKind kind() const { return static_cast<PlantKind>(params_.index()); }
  const Params& params() const { return params_; }
  const PccRobot& pcc() const {
    if (kind() != PlantKind::PccRobot) throw PreconditionError("plant is not a PCC robot");
    return std::get<PccRobot>(params_);
  }

  int dof() const {
    switch (kind()) {
      case PlantKind::MassSpring:
      case PlantKind::Pendulum: return 1;
      case PlantKind::DoublePendulum: return 2;
      case PlantKind::PccRobot: return pcc().dof();
    }
    return 0;
  }
  int input_dim() const { return dof(); }

  Vec field(const Vec& y, const Vec& u = {}) const {
    return std::visit(
        [&](const auto& p) -> Vec {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, MassSpringParams>) return mass_spring_field(p, y, u);
          else if constexpr (std::is_same_v<T, PendulumParams>) return pendulum_field(p, y, u);
          else if constexpr (std::is_same_v<T, DoublePendulumParams>) return double_pendulum_field(p, y, u);
          else return p.field(y, u);
        },
        params_);
  }

  double energy(const Vec& y) const {
    return std::visit(
        [&](const auto& p) -> double {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, MassSpringParams>) return mass_spring_energy(p, y);
          else if constexpr (std::is_same_v<T, PendulumParams>) return pendulum_energy(p, y);
          else if constexpr (std::is_same_v<T, DoublePendulumParams>) return double_pendulum_energy(p, y);
          else return p.energy(y);
        },
        params_);
  }

 private:
  Params params_;
};

namespace detail {

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("plant field '") + key + "': " + e.what());
  }
}

}  // namespace detail

/// {"kind": "mass_spring" | "pendulum" | "double_pendulum" | "pcc", ...};
/// omitted fields keep their defaults.
inline PlantModel plant_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) {
    throw ConfigError("plant config needs a string 'kind'");
  }
  const PlantKind kind = plant_kind_from_string(j["kind"].get<std::string>());
  try {
    switch (kind) {
      case PlantKind::MassSpring: {
        MassSpringParams p;
        detail::read_opt(j, "mass", p.mass);
        detail::read_opt(j, "stiffness", p.stiffness);
        detail::read_opt(j, "damping", p.damping);
        return PlantModel(p);
      }
      case PlantKind::Pendulum:
      case PlantKind::DoublePendulum: {
        PendulumParams p;
        detail::read_opt(j, "mass", p.mass);
        detail::read_opt(j, "length", p.length);
        detail::read_opt(j, "gravity", p.gravity);
        detail::read_opt(j, "damping", p.damping);
        if (kind == PlantKind::Pendulum) return PlantModel(p);
        return PlantModel(DoublePendulumParams{p.mass, p.length, p.gravity, p.damping});
      }
      case PlantKind::PccRobot: {
        PccParams p;
        detail::read_opt(j, "segments", p.segments);
        detail::read_opt(j, "length", p.length);
        detail::read_opt(j, "diameter", p.diameter);
        detail::read_opt(j, "density", p.density);
        detail::read_opt(j, "youngs_modulus", p.youngs_modulus);
        detail::read_opt(j, "shear_modulus", p.shear_modulus);
        detail::read_opt(j, "damping_bending", p.damping_bending);
        detail::read_opt(j, "damping_shear", p.damping_shear);
        detail::read_opt(j, "damping_axial", p.damping_axial);
        detail::read_opt(j, "gravity", p.gravity);
        detail::read_opt(j, "quadrature_order", p.quadrature_order);
        std::string mode = to_string(p.strain_mode);
        detail::read_opt(j, "strain_mode", mode);
        p.strain_mode = strain_mode_from_string(mode);
        return PlantModel(p);
      }
    }
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("plant: ") + e.what());
  }
  throw ConfigError("unreachable plant kind");
}

// -----------------------------------------------------------------------------
// Trajectory generation
// -----------------------------------------------------------------------------

/// Initial states used for datasets, all at rest: toy plants start from a
/// random signed displacement (|x0| in [0.1, 1] for the mass-spring, |q0| in
/// [1.3, 2.3] rad per joint for pendula), the robot from q0 ~ U(-q_max, q_max).
inline Vec sample_initial_state(const PlantModel& plant, CounterRng& rng) {
  const int n = plant.dof();
  Vec y = Vec::Zero(2 * n);
  double lo = 0.0, hi = 0.0;
  switch (plant.kind()) {
    case PlantKind::MassSpring: lo = 0.1; hi = 1.0; break;
    case PlantKind::Pendulum:
    case PlantKind::DoublePendulum: lo = 1.3; hi = 2.3; break;
    case PlantKind::PccRobot: {
      const Vec qmax = plant.pcc().strain_bound();
      for (int i = 0; i < n; ++i) y[i] = rng.uniform(-qmax[i], qmax[i]);
      return y;
    }
  }
  for (int i = 0; i < n; ++i) {
    const double mag = rng.uniform(lo, hi);
    y[i] = rng.uniform() < 0.5 ? -mag : mag;
  }
  return y;
}

/// Constant input per trajectory: zero for toy plants, a uniform draw within
/// the actuation bound for the robot.
inline Vec sample_constant_input(const PlantModel& plant, CounterRng& rng) {
  if (plant.kind() == PlantKind::PccRobot) return plant.pcc().sample_actuation(rng);
  return Vec::Zero(plant.input_dim());
}

/// Rollout of a plant under a constant input, sampled every sample_dt.
inline Trajectory simulate_plant(const PlantModel& plant, const IntegratorSpec& spec, const Vec& y0,
                                 const Vec& u, double horizon, double sample_dt) {
  require_dim(y0.size(), 2 * plant.dof(), "plant initial state");
  require_dim(u.size(), plant.input_dim(), "plant input");
  auto field = [&plant](double, const Vec& y, const Vec& uu) { return plant.field(y, uu); };
  InputSignal hold = [&u](double) { return u; };
  return rollout(spec, field, y0, hold, 0.0, horizon, sample_dt);
}

}  // namespace isscon
