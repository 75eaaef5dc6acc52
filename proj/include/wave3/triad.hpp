#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>

#include "wave3/errors.hpp"

namespace wave3 {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kHalfPi = 0.5 * std::numbers::pi;

/// Moduli below this threshold carry no usable phase.
inline constexpr double kEpsZero = 1e-14;

/// Phase agreement tolerance for exact statements (frozen or locked phases).
inline constexpr double kEpsPhase = 1e-9;

/// Amplitude agreement tolerance used when comparing moduli for ties.
inline constexpr double kEpsAmp = 1e-9;

template <typename Scalar>
using TriadT = Eigen::Matrix<std::complex<Scalar>, 3, 1>;
using Triad = TriadT<double>;

template <typename Scalar>
using RealTriple = Eigen::Matrix<Scalar, 3, 1>;

/// Sign pattern of the quadratic coupling, one sign per wave.
class Coupling {
 public:
  Coupling() = default;
  Coupling(int g1, int g2, int g3) : g_{g1, g2, g3} {
    for (int v : g_)
      if (v != 1 && v != -1)
        throw std::invalid_argument("coupling signs must be +1 or -1");
  }

  int operator[](int j) const { return g_[j]; }
  bool same_sign() const { return g_[0] == g_[1] && g_[1] == g_[2]; }

  friend bool operator==(const Coupling&, const Coupling&) = default;

 private:
  std::array<int, 3> g_{1, 1, 1};
};

template <typename Scalar>
bool is_finite(const TriadT<Scalar>& a) {
  for (int j = 0; j < 3; ++j)
    if (!std::isfinite(a[j].real()) || !std::isfinite(a[j].imag())) return false;
  return true;
}

template <typename Scalar>
void require_finite(const TriadT<Scalar>& a) {
  if (!is_finite(a)) throw InvalidStateError("triad state has non-finite entries");
}

template <typename Scalar>
Scalar max_modulus(const TriadT<Scalar>& a) {
  return a.cwiseAbs().maxCoeff();
}

template <typename Scalar>
Scalar min_modulus(const TriadT<Scalar>& a) {
  return a.cwiseAbs().minCoeff();
}

namespace detail {

// Unchecked kernel shared by the adaptive stepper and the field solver.
template <typename Scalar>
inline TriadT<Scalar> coupling_rhs(const TriadT<Scalar>& a, const Coupling& g) noexcept {
  using C = std::complex<Scalar>;
  TriadT<Scalar> out;
  out[0] = C(Scalar(0), Scalar(g[0])) * std::conj(a[1] * a[2]);
  out[1] = C(Scalar(0), Scalar(g[1])) * std::conj(a[0] * a[2]);
  out[2] = C(Scalar(0), Scalar(g[2])) * std::conj(a[0] * a[1]);
  return out;
}

}  // namespace detail

/// Time derivative of a spatially uniform triad.
template <typename Scalar>
TriadT<Scalar> rhs_uniform(const TriadT<Scalar>& a, const Coupling& g) {
  require_finite(a);
  return detail::coupling_rhs(a, g);
}

template <typename Scalar>
struct InvariantSetT {
  Scalar m12;  // g2|A1|^2 - g1|A2|^2
  Scalar m13;  // g3|A1|^2 - g1|A3|^2
  Scalar h;    // 2 Re(A1 A2 A3)
};
using InvariantSet = InvariantSetT<double>;

/// Conserved combinations of a uniform triad. All three are constant along
/// solutions for every sign pattern, not only the all-equal one.
template <typename Scalar>
InvariantSetT<Scalar> invariants(const TriadT<Scalar>& a, const Coupling& g) {
  require_finite(a);
  const Scalar n1 = std::norm(a[0]);
  const Scalar n2 = std::norm(a[1]);
  const Scalar n3 = std::norm(a[2]);
  InvariantSetT<Scalar> s;
  s.m12 = Scalar(g[1]) * n1 - Scalar(g[0]) * n2;
  s.m13 = Scalar(g[2]) * n1 - Scalar(g[0]) * n3;
  s.h = Scalar(2) * std::real(a[0] * a[1] * a[2]);
  return s;
}

/// Map an angle into [0, 2*pi).
template <typename Scalar>
Scalar wrap_angle(Scalar a) {
  Scalar w = std::fmod(a, Scalar(kTwoPi));
  if (w < Scalar(0)) w += Scalar(kTwoPi);
  if (w >= Scalar(kTwoPi)) w = Scalar(0);
  return w;
}

/// Circular distance between two angles, in [0, pi].
template <typename Scalar>
Scalar angle_distance(Scalar a, Scalar b) {
  const Scalar d = wrap_angle(a - b);
  return std::min(d, Scalar(kTwoPi) - d);
}

template <typename Scalar>
struct PolarTriadT {
  RealTriple<Scalar> radius;
  RealTriple<Scalar> phase;  // NaN marks an undefined phase

  bool phase_defined(int j) const { return !std::isnan(phase[j]); }
};
using PolarTriad = PolarTriadT<double>;

/// Moduli and phases of a triad. Components with modulus below kEpsZero get
/// a NaN phase rather than the noise atan2 would produce.
template <typename Scalar>
PolarTriadT<Scalar> to_polar(const TriadT<Scalar>& a) {
  require_finite(a);
  PolarTriadT<Scalar> p;
  for (int j = 0; j < 3; ++j) {
    p.radius[j] = std::abs(a[j]);
    p.phase[j] = p.radius[j] < Scalar(kEpsZero)
                     ? std::numeric_limits<Scalar>::quiet_NaN()
                     : wrap_angle(std::arg(a[j]));
  }
  return p;
}

template <typename Scalar>
TriadT<Scalar> from_polar(const PolarTriadT<Scalar>& p) {
  TriadT<Scalar> a;
  for (int j = 0; j < 3; ++j) {
    const Scalar r = p.radius[j];
    if (!std::isfinite(r) || r < Scalar(0))
      throw InvalidStateError("modulus must be finite and non-negative");
    if (!p.phase_defined(j)) {
      if (r >= Scalar(kEpsZero))
        throw InvalidStateError("phase undefined for a non-vanishing modulus");
      a[j] = std::complex<Scalar>(Scalar(0), Scalar(0));
    } else {
      if (!std::isfinite(p.phase[j])) throw InvalidStateError("phase must be finite");
      a[j] = std::polar(r, p.phase[j]);
    }
  }
  return a;
}

/// Sum of the three phases, reported in [0, 2*pi). Throws when any factor is
/// too small for the product's argument to mean anything.
template <typename Scalar>
Scalar total_phase(const TriadT<Scalar>& a) {
  require_finite(a);
  const std::complex<Scalar> prod = a[0] * a[1] * a[2];
  constexpr Scalar floor = Scalar(kEpsZero) * Scalar(kEpsZero) * Scalar(kEpsZero);
  if (std::abs(prod) < floor)
    throw PhaseUndefinedError("total phase undefined: amplitude product vanishes");
  return wrap_angle(std::arg(prod));
}

template <typename Scalar>
struct PolarRatesT {
  Scalar radius_sq_rate;            // d|Aj|^2/dtau, identical for all three waves
  RealTriple<Scalar> phase_rate;    // d theta_j / dtau
};
using PolarRates = PolarRatesT<double>;

/// Polar-coordinate velocity field for the all-plus coupling. Requires every
/// modulus strictly positive so the phase equations are regular.
template <typename Scalar>
PolarRatesT<Scalar> polar_rates(const PolarTriadT<Scalar>& p) {
  for (int j = 0; j < 3; ++j) {
    if (!std::isfinite(p.radius[j]) || p.radius[j] <= Scalar(0) || !p.phase_defined(j))
      throw PhaseUndefinedError("polar rates need positive moduli and defined phases");
  }
  const Scalar theta = p.phase.sum();
  const Scalar prod = p.radius[0] * p.radius[1] * p.radius[2];
  PolarRatesT<Scalar> out;
  out.radius_sq_rate = Scalar(2) * prod * std::sin(theta);
  const Scalar c = std::cos(theta);
  for (int j = 0; j < 3; ++j)
    out.phase_rate[j] = prod / (p.radius[j] * p.radius[j]) * c;
  return out;
}

}  // namespace wave3
