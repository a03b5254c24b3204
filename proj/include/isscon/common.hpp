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

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>

namespace isscon {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// -----------------------------------------------------------------------------
// Errors
// -----------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad parameter values (non-finite entries, non-positive constants).
class ParameterError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A linear map that must be invertible is (numerically) singular.
class SingularityError : public Error {
 public:
  SingularityError(const std::string& what, double condition)
      : Error(what), condition_(condition) {}
  double condition() const { return condition_; }

 private:
  double condition_;
};

/// Iterative method failed to converge.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Integration produced a non-finite state or the step size collapsed.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, double time, Vec last_finite)
      : Error(what), time_(time), last_finite_(std::move(last_finite)) {}
  double time() const { return time_; }
  const Vec& last_finite_state() const { return last_finite_; }

 private:
  double time_;
  Vec last_finite_;
};

inline void require_dim(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    throw DimensionError(std::string(what) + ": expected dimension " +
                         std::to_string(want) + ", got " + std::to_string(got));
  }
}

// -----------------------------------------------------------------------------
// Scalar helpers
// -----------------------------------------------------------------------------

/// log(1 + e^x) without overflow.
inline double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

/// log(cosh(a)) evaluated as |a| + log((1 + e^{-2|a|}) / 2); near zero as
/// log1p(2 sinh^2(a/2)).
inline double lcosh(double a) {
  const double m = std::abs(a);
  if (m < 1.0) {
    const double h = std::sinh(0.5 * m);
    return std::log1p(2.0 * h * h);
  }
  return m + std::log1p(std::exp(-2.0 * m)) - std::log(2.0);
}

/// lcosh(a + r) - lcosh(a) - tanh(a) r, the tanh part of the CON potential.
/// Tiny |r| uses the Taylor series (derivatives of tanh at a), small |r| the
/// log1p form; both avoid the cancellation of the direct difference.
inline double tanh_potential(double a, double r) {
  const double t = std::tanh(a);
  if (std::abs(r) < 1e-4) {
    const double s2 = 1.0 - t * t;
    const double t2 = t * t;
    return s2 * r * r *
           (0.5 + r * (-t / 3.0 + r * ((6.0 * t2 - 2.0) / 24.0 + r * (16.0 * t - 24.0 * t2 * t) / 120.0)));
  }
  if (std::abs(r) < 0.5) {
    const double sh = std::sinh(r);
    const double half = std::sinh(0.5 * r);
    // cosh(r) - 1 = 2 sinh^2(r/2)
    return std::log1p(2.0 * half * half + t * sh) - t * r;
  }
  return lcosh(a + r) - lcosh(a) - t * r;
}

inline bool all_finite(const Vec& v) { return v.allFinite(); }

/// Printf-style formatting of a double with 17 significant digits.
inline std::string format17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// -----------------------------------------------------------------------------
// Counter-based RNG
// -----------------------------------------------------------------------------

/// Counter-based 64-bit generator: draw i of stream `key` is
/// mix(key + (i + 1) * 0x9E3779B97F4A7C15), where mix is the SplitMix64
/// finalizer (multipliers 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB, shifts
/// 30/27/31). Output depends only on (key, counter), so sequences are
/// identical on every platform and any draw can be recomputed independently.
class CounterRng {
 public:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0)
      : key_(key), counter_(counter) {}

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t next_u64() {
    ++counter_;
    return mix(key_ + counter_ * kGamma);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one draw per call; second discarded).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  /// Independent child stream, e.g. one per trajectory or per configuration.
  CounterRng fork(std::uint64_t stream) const {
    return CounterRng(mix(key_ ^ mix(stream + 0x632BE59BD9B4E019ULL)));
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace isscon
