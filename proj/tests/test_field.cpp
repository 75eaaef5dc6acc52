#include "wave3/field.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "wave3/errors.hpp"
#include "wave3/ode.hpp"

using namespace wave3;
using C = std::complex<double>;

namespace {

Triad make_triad(C a1, C a2, C a3) {
  Triad a;
  a << a1, a2, a3;
  return a;
}

// Band-limited test profile with known coefficients, so shifted values can
// be evaluated analytically.
C profile(double x, double a) {
  const double k = kPi / a;
  return C(3.0, 0.0) + 0.5 * std::polar(1.0, k * x) + C(0, 0.25) * std::polar(1.0, -2.0 * k * x);
}

TriadField smooth_field_1d(int n, double a) {
  TriadField f = make_field(make_domain(a), n);
  for (int i = 0; i < n; ++i) {
    const double x = f.coord(0, i);
    f.comp[0](i, 0) = profile(x, a);
    f.comp[1](i, 0) = 0.5 * profile(-x, a);
    f.comp[2](i, 0) = C(0, 1) * profile(x + 0.3, a);
  }
  return f;
}

double l2_sq(const Eigen::ArrayXXcd& u) { return u.abs2().sum(); }

}  // namespace

TEST_CASE("field construction validates its arguments") {
  CHECK_THROWS_AS(make_domain(-1.0), std::invalid_argument);
  CHECK_THROWS_AS(make_domain(1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(make_field(make_domain(kPi), 12), std::invalid_argument);
  CHECK_THROWS_AS(make_field(make_domain(kPi), 16, 4), std::invalid_argument);
  CHECK_THROWS_AS(make_field(make_domain(kPi, kPi), 16, 12), std::invalid_argument);
  const TriadField f = make_field(make_domain(kPi, 2.0), 8, 4);
  CHECK(f.points() == 32);
  CHECK(f.cell_measure() == doctest::Approx((2 * kPi / 8) * (4.0 / 4)));
  CHECK(f.coord(0, 0) == doctest::Approx(-kPi));
  CHECK(f.coord(1, 1) == doctest::Approx(-2.0 + 1.0));
}

TEST_CASE("spectral shift reproduces the analytic translation") {
  const double a = 2.0;
  TriadField f = smooth_field_1d(32, a);
  const double d = 0.37;
  spectral_shift(f.comp[0], f.domain, {d, 0.0});
  for (int i = 0; i < 32; ++i) {
    const double x = f.coord(0, i);
    CHECK(std::abs(f.comp[0](i, 0) - profile(x - d, a)) < 1e-12);
  }
}

TEST_CASE("spectral shift is an exact isometry and invertible") {
  TriadField f = smooth_field_1d(64, kPi);
  const Eigen::ArrayXXcd before = f.comp[2];
  const double e0 = l2_sq(before);
  spectral_shift(f.comp[2], f.domain, {1.234, 0.0});
  CHECK(l2_sq(f.comp[2]) == doctest::Approx(e0).epsilon(1e-13));
  spectral_shift(f.comp[2], f.domain, {-1.234, 0.0});
  CHECK((f.comp[2] - before).abs().maxCoeff() < 1e-12);
}

TEST_CASE("shifting by a full period is the identity") {
  TriadField f = smooth_field_1d(16, 1.5);
  const Eigen::ArrayXXcd before = f.comp[0];
  spectral_shift(f.comp[0], f.domain, {3.0, 0.0});
  CHECK((f.comp[0] - before).abs().maxCoeff() < 1e-12);
}

TEST_CASE("two-dimensional shift moves both axes") {
  const double a1 = kPi, a2 = 2.0;
  TriadField f = make_field(make_domain(a1, a2), 16, 8);
  for (int i2 = 0; i2 < 8; ++i2)
    for (int i1 = 0; i1 < 16; ++i1) {
      const double x = f.coord(0, i1), y = f.coord(1, i2);
      f.comp[0](i1, i2) =
          std::polar(1.0, kPi * x / a1) * std::polar(1.0, -kPi * y / a2) + C(0.5, 0);
    }
  const Eigen::Vector2d d{0.21, -0.47};
  spectral_shift(f.comp[0], f.domain, d);
  for (int i2 = 0; i2 < 8; ++i2)
    for (int i1 = 0; i1 < 16; ++i1) {
      const double x = f.coord(0, i1), y = f.coord(1, i2);
      const C want =
          std::polar(1.0, kPi * (x - d[0]) / a1) * std::polar(1.0, -kPi * (y - d[1]) / a2) +
          C(0.5, 0);
      CHECK(std::abs(f.comp[0](i1, i2) - want) < 1e-12);
    }
}

TEST_CASE("tail fraction splits the spectrum at two thirds of the band") {
  const int n = 16;  // cutoff: modes with 3|s| >= 16, i.e. |s| >= 6
  TriadField f = make_field(make_domain(kPi), n);
  for (int i = 0; i < n; ++i) {
    const double x = f.coord(0, i);
    f.comp[0](i, 0) = std::polar(1.0, 5.0 * x);  // mode 5: below the cutoff
    f.comp[1](i, 0) = std::polar(1.0, 6.0 * x);  // mode 6: in the tail
    f.comp[2](i, 0) = C(1.0, 0.0);
  }
  CHECK(tail_fraction(f.comp[0], f.domain) == doctest::Approx(0.0));
  CHECK(tail_fraction(f.comp[1], f.domain) == doctest::Approx(1.0));
  CHECK(tail_fraction(f.comp[2], f.domain) == doctest::Approx(0.0));
  CHECK(tail_fraction(f) == doctest::Approx(1.0));
}

TEST_CASE("pointwise coupling step matches a hand-stepped triad") {
  const Triad a0 = make_triad(C(0.4, 0.1), C(-0.2, 0.3), C(0.1, -0.5));
  const Coupling g(1, -1, 1);
  const double dt = 0.01;
  TriadField f = constant_field(make_domain(1.0), 8, 1, a0);
  nonlinear_step(f, g, dt);

  // One classical fourth-order step, written out against rhs_uniform.
  const Triad k1 = rhs_uniform(a0, g);
  const Triad k2 = rhs_uniform(Triad(a0 + 0.5 * dt * k1), g);
  const Triad k3 = rhs_uniform(Triad(a0 + 0.5 * dt * k2), g);
  const Triad k4 = rhs_uniform(Triad(a0 + dt * k3), g);
  const Triad want = a0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 8; ++i) CHECK(std::abs(f.comp[j](i, 0) - want[j]) < 1e-15);
}

TEST_CASE("pointwise coupling step converges at fourth order") {
  const Triad a0 = make_triad(C(0.6, 0.2), C(-0.3, 0.4), C(0.2, -0.7));
  const Coupling g(1, 1, 1);
  const double tau = 0.2;

  // Reference: the same kernel at a step 100x finer.
  TriadField ref = constant_field(make_domain(1.0), 8, 1, a0);
  for (int i = 0; i < 2000; ++i) CHECK(!nonlinear_step(ref, g, tau / 2000));

  auto coarse_error = [&](int steps) {
    TriadField f = constant_field(make_domain(1.0), 8, 1, a0);
    for (int i = 0; i < steps; ++i) nonlinear_step(f, g, tau / steps);
    double worst = 0.0;
    for (int j = 0; j < 3; ++j)
      worst = std::max(worst, (f.comp[j] - ref.comp[j]).abs().maxCoeff());
    return worst;
  };
  const double e1 = coarse_error(10);
  const double e2 = coarse_error(20);
  CHECK(e1 / e2 > 12.0);  // halving dt should shrink the error about 16x
  CHECK(e2 < 1e-8);
}

TEST_CASE("pointwise coupling step reports a non-finite result with its location") {
  TriadField f = constant_field(make_domain(1.0), 8, 1,
                                make_triad(C(1, 0), C(1, 0), C(1, 0)));
  f.comp[1](5, 0) = C(std::numeric_limits<double>::infinity(), 0.0);
  const auto ev = nonlinear_step(f, Coupling(1, 1, 1), 0.01);
  REQUIRE(ev.has_value());
  CHECK(ev->where.i1 == 5);
  CHECK(!std::isfinite(ev->value));
}

TEST_CASE("split step with zero velocities equals the pointwise step exactly") {
  TriadField f = smooth_field_1d(16, kPi);
  for (auto& u : f.comp) u *= 0.3;  // keep the run bounded
  TriadField ref = f;
  const Coupling g(1, -1, -1);
  CHECK(!step_strang(f, g, uniform_velocity({0.0, 0.0}), 0.05));
  nonlinear_step(ref, g, 0.05);
  for (int j = 0; j < 3; ++j)
    CHECK((f.comp[j] - ref.comp[j]).abs().maxCoeff() == 0.0);
}

TEST_CASE("advecting by exactly one grid cell rotates the samples") {
  const int n = 16;
  const double a = 1.2;
  TriadField f = smooth_field_1d(n, a);
  const TriadField before = f;
  const double dx = 2.0 * a / n;
  advect(f, uniform_velocity({dx, 0.0}), 1.0);
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < n; ++i) {
      const int src = (i - 1 + n) % n;
      CHECK(std::abs(f.comp[j](i, 0) - before.comp[j](src, 0)) < 1e-12);
    }
}

TEST_CASE("equal-velocity runs ride the comoving frame exactly") {
  const int n = 16;
  const double a = kPi;
  TriadField f0 = make_field(make_domain(a), n);
  for (int i = 0; i < n; ++i) {
    const double x = f0.coord(0, i);
    const double env = 0.6 + 0.2 * std::cos(kPi * x / a);
    f0.comp[0](i, 0) = env * std::polar(1.0, 0.4 + 0.3 * std::sin(kPi * x / a));
    f0.comp[1](i, 0) = (0.5 + 0.1 * std::sin(kPi * x / a)) * std::polar(1.0, -0.2);
    f0.comp[2](i, 0) = C(0.7, -0.1);
  }
  const Coupling g(1, 1, 1);
  const VelocitySet vel = uniform_velocity({0.8, 0.0});
  FieldRunOptions opt;
  opt.dt = 1e-3;
  opt.tau_end = 0.5;
  opt.sample_every_steps = 100;
  const FieldTrajectory run = run_pde(f0, g, vel, opt);
  REQUIRE(run.termination == FieldTermination::Completed);

  // Oracle: evolve each grid point as a uniform triad, then translate.
  TriadField want = f0;
  for (int i = 0; i < n; ++i) {
    const Triad endpoint = integrate_to(f0.at(i), g, 0.5, 1e-12);
    for (int j = 0; j < 3; ++j) want.comp[j](i, 0) = endpoint[j];
  }
  for (int j = 0; j < 3; ++j) spectral_shift(want.comp[j], want.domain, {0.8 * 0.5, 0.0});
  for (int j = 0; j < 3; ++j)
    CHECK((run.final_field.comp[j] - want.comp[j]).abs().maxCoeff() < 1e-9);
}

TEST_CASE("integral invariants hold with distinct velocities and mixed signs") {
  TriadField f0 = smooth_field_1d(32, kPi);
  for (auto& u : f0.comp) u *= 0.2;  // keep the run comfortably bounded
  VelocitySet vel;
  vel.c = {Eigen::Vector2d{0.7, 0}, Eigen::Vector2d{-0.4, 0}, Eigen::Vector2d{0.3, 0}};
  FieldRunOptions opt;
  opt.dt = 1e-3;
  opt.tau_end = 0.5;
  opt.sample_every_steps = 50;
  const FieldTrajectory run = run_pde(f0, Coupling(1, -1, -1), vel, opt);
  REQUIRE(run.termination == FieldTermination::Completed);
  const double k12_0 = run.samples.front().k12;
  const double k13_0 = run.samples.front().k13;
  for (const FieldSample& s : run.samples) {
    CHECK(std::abs(s.k12 - k12_0) < 1e-9);
    CHECK(std::abs(s.k13 - k13_0) < 1e-9);
  }
}

TEST_CASE("uniform growth field blows up like the matching triad") {
  const Triad seed = make_triad(std::polar(1.0, kPi / 6), std::polar(1.0, kPi / 6),
                                std::polar(1.0, kPi / 6));
  TriadField f0 = constant_field(make_domain(1.0), 8, 1, seed);
  FieldRunOptions opt;
  opt.dt = 1e-4;
  opt.tau_end = 2.0;
  opt.sample_every_steps = 100;
  const FieldTrajectory run = run_pde(f0, Coupling(1, 1, 1), uniform_velocity({0.5, 0}), opt);
  REQUIRE(run.termination == FieldTermination::BlowUpReached);
  REQUIRE(run.blow_up.has_value());
  CHECK(run.final_field.is_finite());
  // Detection happens on the first step that oversteps the pole.
  CHECK(run.stop_time < 1.01);
  CHECK(run.t_star == doctest::Approx(1.0).epsilon(1e-3));

  const Trajectory ode = integrate(seed, Coupling(1, 1, 1), 2.0, 1e-10);
  REQUIRE(ode.termination == Termination::BlowUpDetected);
  CHECK(std::abs(run.t_star - ode.t_star) / ode.t_star < 1e-3);
}

TEST_CASE("frozen phases stay frozen and the floor ratchets up") {
  const int n = 32;
  const double a = kPi;
  TriadField f0 = make_field(make_domain(a), n);
  const double theta = kPi / 6;  // three equal phases summing to pi/2
  for (int i = 0; i < n; ++i) {
    const double x = f0.coord(0, i);
    f0.comp[0](i, 0) = (1.5 + 0.3 * std::cos(kPi * x / a)) * std::polar(1.0, theta);
    f0.comp[1](i, 0) = (1.4 - 0.2 * std::sin(kPi * x / a)) * std::polar(1.0, theta);
    f0.comp[2](i, 0) = (1.6 + 0.1 * std::cos(2 * kPi * x / a)) * std::polar(1.0, theta);
  }
  VelocitySet vel;
  vel.c = {Eigen::Vector2d{0.7, 0}, Eigen::Vector2d{-0.4, 0}, Eigen::Vector2d{0.3, 0}};
  FieldRunOptions opt;
  opt.dt = 5e-4;
  opt.tau_end = 0.3;
  opt.sample_every_steps = 100;
  opt.track_phase_sum = true;
  const FieldTrajectory run = run_pde(f0, Coupling(1, 1, 1), vel, opt);
  REQUIRE(run.termination == FieldTermination::Completed);

  const double f_start = run.samples.front().f_min;
  double prev = -1.0;
  for (const FieldSample& s : run.samples) {
    CHECK(s.phase_dev <= 1e-9);
    CHECK(s.f_min >= prev);
    prev = s.f_min;
    CHECK(s.f_min >= riccati_lower_bound(f_start, 0.0, s.tau));
  }
  CHECK(run.samples.back().f_min > f_start);
}

TEST_CASE("transported quadratic combinations track their initial data") {
  TriadField f0 = smooth_field_1d(32, kPi);
  for (auto& u : f0.comp) u *= 0.5;
  FieldRunOptions opt;
  opt.dt = 1e-3;
  opt.tau_end = 0.4;
  opt.sample_every_steps = 40;
  opt.track_transport = true;
  const FieldTrajectory run =
      run_pde(f0, Coupling(1, -1, -1), uniform_velocity({0.6, 0}), opt);
  REQUIRE(run.termination == FieldTermination::Completed);
  for (const FieldSample& s : run.samples) CHECK(s.transport_defect < 1e-8);
}

TEST_CASE("transport tracking requires a shared velocity") {
  TriadField f0 = smooth_field_1d(8, kPi);
  VelocitySet vel;
  vel.c = {Eigen::Vector2d{0.7, 0}, Eigen::Vector2d{-0.4, 0}, Eigen::Vector2d{0.3, 0}};
  FieldRunOptions opt;
  opt.track_transport = true;
  CHECK_THROWS_AS(run_pde(f0, Coupling(1, -1, -1), vel, opt), std::invalid_argument);
}

TEST_CASE("coarse steps trip the conservation monitor") {
  const Triad seed = make_triad(C(0, 1.0), C(0.9, 0), C(0, 1.1));
  TriadField f0 = constant_field(make_domain(1.0), 8, 1, seed);
  FieldRunOptions opt;
  opt.dt = 0.09;  // large enough for visible scheme error, below runaway
  opt.tau_end = 500.0;
  opt.sample_every_steps = 10;
  const FieldTrajectory run =
      run_pde(f0, Coupling(1, -1, -1), uniform_velocity({0.0, 0.0}), opt);
  CHECK(run.termination == FieldTermination::DriftAbort);
  CHECK(run.stop_time < 500.0);
}

TEST_CASE("an underresolved cascade trips the resolution monitor") {
  const int n = 8;
  TriadField f0 = make_field(make_domain(kPi), n);
  for (int i = 0; i < n; ++i) {
    const double x = f0.coord(0, i);
    f0.comp[0](i, 0) = 2.0 + std::polar(0.5, x);
    f0.comp[1](i, 0) = C(0, 2.0) + std::polar(0.4, -2.0 * x);
    f0.comp[2](i, 0) = 2.0 - std::polar(0.3, x);
  }
  VelocitySet vel;
  vel.c = {Eigen::Vector2d{0.7, 0}, Eigen::Vector2d{-0.4, 0}, Eigen::Vector2d{0.3, 0}};
  FieldRunOptions opt;
  opt.dt = 1e-3;
  opt.tau_end = 5.0;
  opt.sample_every_steps = 5;
  const FieldTrajectory run = run_pde(f0, Coupling(1, -1, -1), vel, opt);
  CHECK(run.termination == FieldTermination::ResolutionAbort);
  CHECK_FALSE(std::isnan(run.first_tail_warning));
  CHECK(run.first_tail_warning <= run.stop_time);
}

TEST_CASE("terminal growth suspends the monitors so the blow-up wins") {
  const Triad seed = make_triad(std::polar(1.2, kPi / 6), std::polar(1.1, kPi / 6),
                                std::polar(1.3, kPi / 6));
  TriadField f0 = constant_field(make_domain(1.0), 8, 1, seed);
  FieldRunOptions opt;
  opt.dt = 1e-3;
  opt.tau_end = 2.0;
  opt.sample_every_steps = 10;
  const FieldTrajectory run = run_pde(f0, Coupling(1, 1, 1), uniform_velocity({0, 0}), opt);
  CHECK(run.termination == FieldTermination::BlowUpReached);
}

TEST_CASE("two-dimensional uniform run matches the triad") {
  const Triad seed = make_triad(C(0, 0.8), C(0, 0.8), C(0, 1.6));
  TriadField f0 = constant_field(make_domain(kPi, 2.0), 8, 8, seed);
  VelocitySet vel;
  vel.c = {Eigen::Vector2d{0.3, -0.2}, Eigen::Vector2d{0.3, -0.2},
           Eigen::Vector2d{0.3, -0.2}};
  FieldRunOptions opt;
  opt.dt = 1e-3;
  opt.tau_end = 0.5;
  opt.sample_every_steps = 100;
  const FieldTrajectory run = run_pde(f0, Coupling(1, 1, 1), vel, opt);
  REQUIRE(run.termination == FieldTermination::Completed);
  const Triad want = integrate_to(seed, Coupling(1, 1, 1), 0.5, 1e-12);
  for (int j = 0; j < 3; ++j) {
    CHECK((run.final_field.comp[j] - want[j]).abs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("riccati floor evaluates and guards its pole") {
  CHECK(riccati_lower_bound(1.0, 0.0, 0.0) == doctest::Approx(0.99));
  CHECK(riccati_lower_bound(1.0, 0.5, 0.5) == doctest::Approx(0.99));
  CHECK(riccati_lower_bound(2.0, 0.0, 0.25) == doctest::Approx(1.98 / (1 - 1.98 * 0.25)));
  CHECK_THROWS_AS(riccati_lower_bound(1.0, 0.0, 1.0 / 0.99), PastSingularityError);
  CHECK_THROWS_AS(riccati_lower_bound(1.0, 0.0, 2.0), PastSingularityError);
  CHECK_THROWS_AS(riccati_lower_bound(-1.0, 0.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(riccati_lower_bound(1.0, 1.0, 0.5), std::invalid_argument);
}

TEST_CASE("phase sum deviation reports the worst grid point") {
  const Triad seed = make_triad(std::polar(1.0, kPi / 6), std::polar(1.0, kPi / 6),
                                std::polar(1.0, kPi / 6));
  TriadField f = constant_field(make_domain(1.0), 8, 1, seed);
  CHECK(phase_sum_deviation(f, kHalfPi) < 1e-15);
  f.comp[0](3, 0) *= std::polar(1.0, 0.1);
  CHECK(phase_sum_deviation(f, kHalfPi) == doctest::Approx(0.1));
}

TEST_CASE("blow-up scan finds the offending entry") {
  TriadField f = constant_field(make_domain(1.0), 8, 1, make_triad(C(1, 0), C(0, 1), C(1, 1)));
  CHECK_FALSE(scan_field(f, 1e8).has_value());
  f.comp[1](5, 0) = C(2e8, 0);
  auto ev = scan_field(f, 1e8);
  REQUIRE(ev.has_value());
  CHECK(ev->component == 1);
  CHECK(ev->where.i1 == 5);
  CHECK(ev->value == doctest::Approx(2e8));

  f.comp[1](5, 0) = C(std::numeric_limits<double>::quiet_NaN(), 0);
  ev = scan_field(f, 1e8);
  REQUIRE(ev.has_value());
  CHECK(std::isinf(ev->value));
}

TEST_CASE("snapshots round trip exactly") {
  TriadField f = smooth_field_1d(16, 1.25);
  f.comp[0](3, 0) = C(1e-17, -4.625);
  std::stringstream ss;
  write_field_snapshot(ss, f, 0.625);
  const auto [back, tau] = read_field_snapshot(ss);
  CHECK(tau == 0.625);
  CHECK(field_hash(back) == field_hash(f));
  for (int j = 0; j < 3; ++j) CHECK((back.comp[j] == f.comp[j]).all());

  std::stringstream bad("not a snapshot\n");
  CHECK_THROWS_AS(read_field_snapshot(bad), std::runtime_error);
}

TEST_CASE("snapshot hook fires on the requested cadence") {
  TriadField f0 = constant_field(make_domain(1.0), 8, 1, make_triad(C(0, 0.5), C(0, 0.5), C(0, 1)));
  FieldRunOptions opt;
  opt.dt = 1e-2;
  opt.tau_end = 1.0;
  opt.sample_every_steps = 20;
  opt.snapshot_every = 2;
  std::vector<double> seen;
  opt.snapshot_hook = [&](const TriadField&, double tau, int) { seen.push_back(tau); };
  const FieldTrajectory run = run_pde(f0, Coupling(1, 1, 1), uniform_velocity({0, 0}), opt);
  REQUIRE(run.termination == FieldTermination::Completed);
  // Samples at tau = 0, 0.2, 0.4, 0.6, 0.8, 1.0; hooks on every second one.
  REQUIRE(seen.size() == 3);
  CHECK(seen[0] == doctest::Approx(0.0));
  CHECK(seen[1] == doctest::Approx(0.4));
  CHECK(seen[2] == doctest::Approx(0.8));
}
