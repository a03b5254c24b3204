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

#include <sstream>

#include "isscon/integrators.hpp"
#include "isscon/stability.hpp"
#include "test_util.hpp"

namespace isscon {
namespace {

using testing::random_params;
using testing::random_vec;

Mat random_spd(CounterRng& rng, Eigen::Index n) {
  const Mat a = testing::random_mat(rng, n, n);
  return a * a.transpose() + 0.1 * Mat::Identity(n, n);
}

ConMatrices identity_network(Eigen::Index n) {
  const Mat I = Mat::Identity(n, n);
  return ConMatrices::from(I, I, I, Vec::Zero(n), Mat(n, 0));
}

// --- mu bounds ---------------------------------------------------------------

TEST(MuBounds, ScalarMatrixExamples) {
  const Mat I = Mat::Identity(2, 2);
  EXPECT_DOUBLE_EQ(mu_v_bound(I, I), 1.0);
  EXPECT_DOUBLE_EQ(mu_v_bound(4.0 * I, I), 0.5);
  EXPECT_DOUBLE_EQ(mu_vdot_bound(I, I, I), 0.8);
  EXPECT_DOUBLE_EQ(mu_vdot_bound(I, I, 2.0 * I), 1.0);
  EXPECT_NEAR(mu_v_bound(I, 2.0 * I), 1.41421356237309505, 1e-15);
  EXPECT_NEAR(mu_vdot_bound(I, 2.0 * I, I), 0.888888888888888889, 1e-15);
}

TEST(MuBounds, MatchEigenOracle) {
  CounterRng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.below(7));
    const Mat M = random_spd(rng, n), K = random_spd(rng, n), D = random_spd(rng, n);
    const Eigen::SelfAdjointEigenSolver<Mat> eM(M), eK(K), eD(D);
    const double lmM = eM.eigenvalues().minCoeff(), lMM = eM.eigenvalues().maxCoeff();
    const double lmK = eK.eigenvalues().minCoeff();
    const double lmD = eD.eigenvalues().minCoeff(), lMD = eD.eigenvalues().maxCoeff();
    const double muV = std::sqrt(lmM * lmK) / lMM;
    const double muVd = lmD / (lmM + lMD * lMD / (4.0 * lmK));
    EXPECT_NEAR(mu_v_bound(M, K), muV, 1e-12 * muV);
    EXPECT_NEAR(mu_vdot_bound(M, K, D), muVd, 1e-12 * muVd);
  }
}

TEST(MuBounds, SpectralNormOfNonSymmetricMatrixUsesSingularValues) {
  Mat a(2, 2);
  a << 1.0, 2.0, 0.0, 1.0;
  EXPECT_NEAR(spectral_norm(a), 1.0 + std::sqrt(2.0), 1e-14);
}

// --- certify -----------------------------------------------------------------

TEST(Certify, MaterializedNetworksAreAlwaysValid) {
  CounterRng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.below(10));
    const ConMatrices c = random_params(rng, n, 1).materialize();
    const StabilityCertificate cert = certify(c);
    ASSERT_TRUE(cert.valid) << cert.failure;
    EXPECT_GT(cert.mu, 0.0);
    EXPECT_LT(cert.mu, std::min(cert.mu_V, cert.mu_Vdot));
    EXPECT_GT(cert.eig_P_V.min, 0.0);
    EXPECT_GT(cert.eig_P_Vdot.min, 0.0);
    EXPECT_LT(equilibrium_residual(c, cert.equilibrium).lpNorm<Eigen::Infinity>(), 1e-10);
  }
}

TEST(Certify, MidpointMuForWellConditionedNetwork) {
  const StabilityCertificate cert = certify(identity_network(3));
  ASSERT_TRUE(cert.valid);
  EXPECT_DOUBLE_EQ(cert.mu, 0.4);
  EXPECT_EQ(cert.mu_reductions, 0);
}

TEST(Certify, ZeroDampingIsReportedNotThrown) {
  const Mat I = Mat::Identity(2, 2);
  const ConMatrices c = ConMatrices::from(I, I, Mat::Zero(2, 2), Vec::Zero(2), Mat(2, 0));
  StabilityCertificate cert;
  EXPECT_NO_THROW(cert = certify(c));
  EXPECT_FALSE(cert.valid);
  EXPECT_NE(cert.failure.find("D_w"), std::string::npos);
  EXPECT_TRUE(cert.pd_M);
  EXPECT_TRUE(cert.pd_K);
  EXPECT_FALSE(cert.pd_D);
}

TEST(Certify, IndefiniteStiffnessNamesK) {
  const Mat I = Mat::Identity(2, 2);
  Mat K = I;
  K(1, 1) = -0.5;
  const StabilityCertificate cert = certify(ConMatrices::from(I, K, I, Vec::Zero(2), Mat(2, 0)));
  EXPECT_FALSE(cert.valid);
  EXPECT_NE(cert.failure.find("K_w"), std::string::npos);
}

TEST(Certify, AsymmetricMatrixIsNotPositiveDefinite) {
  Mat a = Mat::Identity(2, 2);
  a(0, 1) = 0.5;
  EXPECT_FALSE(is_positive_definite(a));
  EXPECT_TRUE(is_positive_definite(Mat::Identity(2, 2)));
}

TEST(Certify, ValidityIsRequiredDownstream) {
  const Mat I = Mat::Identity(1, 1);
  const ConMatrices c = ConMatrices::from(I, I, Mat::Zero(1, 1), Vec::Zero(1), Mat(1, 0));
  const StabilityCertificate cert = certify(c);
  EXPECT_THROW(lyapunov_value(c, cert, Vec::Zero(2)), PreconditionError);
  EXPECT_THROW(iss_gain(cert, 1.0), PreconditionError);
}

// --- Lyapunov function -------------------------------------------------------

TEST(Lyapunov, ZeroAtEquilibriumAndPositiveElsewhere) {
  CounterRng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.below(6));
    const ConMatrices c = random_params(rng, n, 0).materialize();
    const StabilityCertificate cert = certify(c);
    EXPECT_EQ(lyapunov_value(c, cert, Vec::Zero(2 * n)), 0.0);
    EXPECT_EQ(lyapunov_rate(c, cert, Vec::Zero(2 * n), Vec::Zero(n)), 0.0);
    for (int s = 0; s < 20; ++s) {
      const Vec y = random_vec(rng, 2 * n, -3, 3);
      EXPECT_GT(lyapunov_value(c, cert, y), 0.0);
    }
  }
}

TEST(Lyapunov, SandwichBoundsAtRandomStates) {
  CounterRng rng(4);
  int checked = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.below(8));
    const ConMatrices c = random_params(rng, n, 0).materialize();
    const StabilityCertificate cert = certify(c);
    for (int s = 0; s < 100; ++s, ++checked) {
      const double scale = std::pow(10.0, rng.uniform(-3.0, 2.0));
      const Vec y = scale * random_vec(rng, 2 * n);
      const double r = y.norm();
      const double v = lyapunov_value(c, cert, y);
      EXPECT_LE(lyapunov_lower_bound(cert, r), v * (1 + 1e-12));
      EXPECT_LE(v, lyapunov_upper_bound(cert, r) * (1 + 1e-12));
    }
  }
  EXPECT_EQ(checked, 1000);
}

TEST(Lyapunov, TanhPartIsNonNegativeAndBoundedByTwiceL1) {
  CounterRng rng(5);
  for (int s = 0; s < 1000; ++s) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.below(5));
    const Vec x_bar = random_vec(rng, n, -3, 3);
    const Vec b = random_vec(rng, n);
    const Vec x = random_vec(rng, n, -20, 20);
    const double h = tanh_potential_sum(x_bar, x, b);
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, 2.0 * x.lpNorm<1>() + 1e-12);
  }
}

TEST(Lyapunov, GradientMatchesFiniteDifferences) {
  CounterRng rng(6);
  const ConMatrices c = random_params(rng, 4, 0).materialize();
  const StabilityCertificate cert = certify(c);
  const Vec y = random_vec(rng, 8, -2, 2);
  const Vec g = testing::fd_gradient([&](const Vec& z) { return lyapunov_value(c, cert, z); }, y, 1e-6);
  EXPECT_LT((g - lyapunov_gradient(c, cert, y)).lpNorm<Eigen::Infinity>(), 1e-6);
}

TEST(Lyapunov, RateMatchesDirectionalDifference) {
  CounterRng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.below(6));
    const ConMatrices c = random_params(rng, n, 0).materialize();
    const StabilityCertificate cert = certify(c);
    const Vec y = random_vec(rng, 2 * n, -2, 2);
    const Vec tau = random_vec(rng, n);
    const Vec f = residual_field(c, cert, y, tau);
    const double h = 1e-6;
    const double fd = (lyapunov_value(c, cert, y + h * f) - lyapunov_value(c, cert, y - h * f)) / (2 * h);
    EXPECT_NEAR(lyapunov_rate(c, cert, y, tau), fd, 1e-5 * std::max(1.0, std::abs(fd)));
  }
}

TEST(Lyapunov, UnforcedRateBelowDissipationMatrixBound) {
  CounterRng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.below(6));
    const ConMatrices c = random_params(rng, n, 0).materialize();
    const StabilityCertificate cert = certify(c);
    for (int s = 0; s < 20; ++s) {
      const Vec y = random_vec(rng, 2 * n, -5, 5);
      const double rate = lyapunov_rate(c, cert, y, Vec::Zero(n));
      EXPECT_LT(rate, 0.0);
      EXPECT_LE(rate, -cert.eig_P_Vdot.min * y.squaredNorm() + 1e-10 * y.squaredNorm());
    }
  }
}

TEST(Lyapunov, ForcedRateBelowDissipationBound) {
  CounterRng rng(9);
  int checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.below(6));
    const ConMatrices c = random_params(rng, n, 0).materialize();
    const StabilityCertificate cert = certify(c);
    for (int s = 0; s < 50; ++s, ++checked) {
      const Vec y = random_vec(rng, 2 * n, -5, 5);
      const Vec tau = random_vec(rng, n, -5, 5);
      const double rate = lyapunov_rate(c, cert, y, tau);
      const double bound = dissipation_bound(cert, y.norm(), tau.norm());
      EXPECT_LE(rate, bound + 1e-10 * (1 + std::abs(bound)));
    }
  }
  EXPECT_EQ(checked, 1000);
}

TEST(Lyapunov, DecreasesAlongUnforcedTrajectory) {
  CounterRng rng(10);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.below(4));
    const ConMatrices c = random_params(rng, n, 0).materialize();
    const StabilityCertificate cert = certify(c);
    const Vec zero = Vec::Zero(n);
    auto f = [&](double, const Vec& y, const Vec&) { return residual_field(c, cert, y, zero); };
    IntegratorSpec spec{Method::DoPri5, 1e-2, true, 1e-8, 1e-10};
    const Trajectory traj = rollout(spec, f, random_vec(rng, 2 * n, -3, 3), {}, 0.0, 60.0, 0.1);
    for (std::size_t k = 0; k + 1 < traj.size(); ++k) {
      if (traj.states[k].norm() <= 1e-6) break;
      EXPECT_LT(lyapunov_value(c, cert, traj.states[k + 1]), lyapunov_value(c, cert, traj.states[k]));
    }
  }
}

// --- ISS gain ----------------------------------------------------------------

StabilityCertificate scalar_certificate() {
  // M = K = D = 1, mu = 0.5, theta = 0.5 assembled by hand.
  StabilityCertificate cert;
  cert.valid = true;
  cert.n = 1;
  cert.mu = 0.5;
  cert.theta = 0.5;
  Mat PV(2, 2), PVd(2, 2);
  PV << 1.0, 0.5, 0.5, 1.0;
  PVd << 0.5, 0.25, 0.25, 0.5;
  cert.eig_P_V = eigen_range(PV);
  cert.eig_P_Vdot = eigen_range(PVd);
  return cert;
}

TEST(IssGain, ScalarCertificateValues) {
  const StabilityCertificate cert = scalar_certificate();
  EXPECT_EQ(iss_gain(cert, 0.0), 0.0);
  EXPECT_NEAR(iss_gain(cert, 1.0), 17.6508972939052951, 1e-12);
  EXPECT_NEAR(iss_gain(cert, 2.0), 33.2130749940439351, 1e-12);
  EXPECT_NEAR(iss_gain(cert, 0.1), 3.09118383924336131, 1e-12);
}

TEST(IssGain, StrictlyIncreasing) {
  CounterRng rng(11);
  const StabilityCertificate cert = certify(random_params(rng, 4, 0).materialize());
  double prev = iss_gain(cert, 0.0);
  for (double r = 1e-4; r < 1e3; r *= 1.7) {
    const double g = iss_gain(cert, r);
    EXPECT_GT(g, prev);
    prev = g;
  }
  EXPECT_THROW(iss_gain(cert, -1.0), PreconditionError);
}

// --- reporting ---------------------------------------------------------------

TEST(Report, JsonMirrorsCertificate) {
  const StabilityCertificate cert = certify(identity_network(2));
  const auto j = to_json(cert);
  EXPECT_TRUE(j.at("valid").get<bool>());
  EXPECT_DOUBLE_EQ(j.at("mu").get<double>(), cert.mu);
  EXPECT_TRUE(j.at("pd_ok").at("D_w").get<bool>());
  EXPECT_EQ(j.at("equilibrium").size(), 2u);
  std::ostringstream os;
  print_certificate(os, cert);
  EXPECT_NE(os.str().find("mu_Vdot"), std::string::npos);
}

}  // namespace
}  // namespace isscon
