#include "wave3/triad.hpp"

#include <complex>

#include "doctest.h"

using namespace wave3;
using C = std::complex<double>;

namespace {

// Plain fixed-step RK4, written independently of the library integrator so
// conservation claims are checked against a second implementation.
Triad rk4_orbit(Triad y, const Coupling& g, double tau, int steps) {
  const double h = tau / steps;
  for (int s = 0; s < steps; ++s) {
    const Triad k1 = rhs_uniform(y, g);
    const Triad k2 = rhs_uniform(Triad(y + 0.5 * h * k1), g);
    const Triad k3 = rhs_uniform(Triad(y + 0.5 * h * k2), g);
    const Triad k4 = rhs_uniform(Triad(y + h * k3), g);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return y;
}

Triad make(C a1, C a2, C a3) {
  Triad a;
  a << a1, a2, a3;
  return a;
}

}  // namespace

TEST_CASE("coupling validates signs") {
  CHECK_THROWS_AS(Coupling(0, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(Coupling(1, 2, 1), std::invalid_argument);
  CHECK(Coupling(1, 1, 1).same_sign());
  CHECK(Coupling(-1, -1, -1).same_sign());
  CHECK_FALSE(Coupling(1, -1, -1).same_sign());
  CHECK(Coupling(1, -1, 1)[1] == -1);
}

TEST_CASE("rhs matches a hand-evaluated product") {
  const Triad a = make(C(1, 2), C(0, 1), C(2, -1));
  // conj(a2 * a3) = conj((0+i)(2-i)) = conj(1 + 2i) = 1 - 2i
  // i * (1 - 2i) = 2 + i
  const Triad d = rhs_uniform(a, Coupling(1, 1, 1));
  CHECK(d[0].real() == doctest::Approx(2.0));
  CHECK(d[0].imag() == doctest::Approx(1.0));
  // conj(a1 * a3) = conj((1+2i)(2-i)) = conj(4 + 3i) = 4 - 3i ; times -i
  const Triad dm = rhs_uniform(a, Coupling(1, -1, 1));
  CHECK(dm[1].real() == doctest::Approx(-3.0));
  CHECK(dm[1].imag() == doctest::Approx(-4.0));
}

TEST_CASE("rhs rejects non-finite states") {
  Triad a = make(C(1, 0), C(0, 0), C(0, 0));
  a[1] = C(std::numeric_limits<double>::quiet_NaN(), 0);
  CHECK_THROWS_AS(rhs_uniform(a, Coupling()), InvalidStateError);
}

TEST_CASE("invariant formulas") {
  const Triad a = make(C(2, 0), C(0, 1), C(1, 1));
  const InvariantSet s = invariants(a, Coupling(1, 1, 1));
  CHECK(s.m12 == doctest::Approx(4.0 - 1.0));
  CHECK(s.m13 == doctest::Approx(4.0 - 2.0));
  // 2 Re(2 * i * (1+i)) = 2 Re(-2 + 2i) = -4
  CHECK(s.h == doctest::Approx(-4.0));

  const InvariantSet sm = invariants(a, Coupling(1, -1, -1));
  CHECK(sm.m12 == doctest::Approx(-4.0 - 1.0));
  CHECK(sm.m13 == doctest::Approx(-4.0 - 2.0));
  CHECK(sm.h == doctest::Approx(-4.0));
}

TEST_CASE("all eight sign patterns conserve the invariant set") {
  const Triad a0 = make(C(0.3, 0.4), C(-0.2, 0.1), C(0.5, -0.3));
  for (int bits = 0; bits < 8; ++bits) {
    const Coupling g(bits & 1 ? 1 : -1, bits & 2 ? 1 : -1, bits & 4 ? 1 : -1);
    CAPTURE(bits);
    const InvariantSet before = invariants(a0, g);
    const Triad a1 = rk4_orbit(a0, g, 2.0, 20000);
    const InvariantSet after = invariants(a1, g);
    CHECK(std::abs(after.m12 - before.m12) < 1e-10);
    CHECK(std::abs(after.m13 - before.m13) < 1e-10);
    CHECK(std::abs(after.h - before.h) < 1e-10);
  }
}

TEST_CASE("polar round trip") {
  const Triad a = make(C(1, 2), C(-0.5, 0.25), C(0, -3));
  const PolarTriad p = to_polar(a);
  for (int j = 0; j < 3; ++j) CHECK(p.phase_defined(j));
  const Triad b = from_polar(p);
  for (int j = 0; j < 3; ++j) CHECK(std::abs(a[j] - b[j]) < 1e-14);
}

TEST_CASE("vanishing component has no phase") {
  const Triad a = make(C(1, 0), C(0, 0), C(0, 1));
  const PolarTriad p = to_polar(a);
  CHECK(p.phase_defined(0));
  CHECK_FALSE(p.phase_defined(1));
  CHECK(p.radius[1] == 0.0);

  PolarTriad bad = p;
  bad.radius[1] = 0.5;  // modulus without a phase
  CHECK_THROWS_AS(from_polar(bad), InvalidStateError);

  PolarTriad neg = p;
  neg.radius[0] = -1.0;
  CHECK_THROWS_AS(from_polar(neg), InvalidStateError);
}

TEST_CASE("total phase sums the arguments") {
  const Triad a = make(std::polar(1.0, 0.3), std::polar(2.0, 0.5), std::polar(0.5, 1.0));
  CHECK(total_phase(a) == doctest::Approx(1.8));
  const Triad w = make(std::polar(1.0, 3.0), std::polar(1.0, 3.0), std::polar(1.0, 3.0));
  CHECK(total_phase(w) == doctest::Approx(9.0 - kTwoPi));

  const Triad z = make(C(1, 0), C(0, 0), C(0, 1));
  CHECK_THROWS_AS(total_phase(z), PhaseUndefinedError);
}

TEST_CASE("angle helpers") {
  CHECK(wrap_angle(-kHalfPi) == doctest::Approx(1.5 * kPi));
  CHECK(wrap_angle(5.0 * kPi) == doctest::Approx(kPi));
  CHECK(wrap_angle(0.0) == 0.0);
  CHECK(angle_distance(0.1, kTwoPi - 0.1) == doctest::Approx(0.2));
  CHECK(angle_distance(kPi, 0.0) == doctest::Approx(kPi));
}

TEST_CASE("polar rates for the symmetric ray") {
  const Triad a = make(C(0, 1), C(0, 1), C(0, 1));  // all phases pi/2, theta 3pi/2
  const PolarRates rates = polar_rates(to_polar(a));
  CHECK(rates.radius_sq_rate == doctest::Approx(-2.0));
  for (int j = 0; j < 3; ++j) CHECK(std::abs(rates.phase_rate[j]) < 1e-15);

  const Triad z = make(C(0, 1), C(0, 0), C(0, 1));
  CHECK_THROWS_AS(polar_rates(to_polar(z)), PhaseUndefinedError);
}

TEST_CASE("radius-squared rate agrees with the complex rhs") {
  const Triad a = make(C(0.7, 0.2), C(-0.3, 0.9), C(0.4, 0.4));
  const Coupling g(1, 1, 1);
  const Triad d = rhs_uniform(a, g);
  const PolarRates rates = polar_rates(to_polar(a));
  for (int j = 0; j < 3; ++j) {
    const double direct = 2.0 * (a[j].real() * d[j].real() + a[j].imag() * d[j].imag());
    CHECK(direct == doctest::Approx(rates.radius_sq_rate).epsilon(1e-12));
  }
}
