#include "wave3/ode.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "wave3/errors.hpp"

namespace wave3 {
namespace {

// Dormand-Prince 5(4) coefficients. The last row of a doubles as the fifth
// order weights, so the final stage evaluation is reused as k1 of the next
// step once a step is accepted.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                 b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

// Step-size controller settings, PI form.
constexpr double kBeta = 0.04;
constexpr double kExpo1 = 0.2 - 0.75 * kBeta;
constexpr double kSafe = 0.9;
constexpr double kShrinkLimit = 5.0;   // factor by which a step may shrink
constexpr double kGrowLimit = 10.0;    // factor by which a step may grow

double error_norm(const Triad& y0, const Triad& y1, const Triad& diff, double tol) {
  double acc = 0.0;
  for (int j = 0; j < 3; ++j) {
    const double sc = tol + tol * std::max(std::abs(y0[j]), std::abs(y1[j]));
    const double r = std::abs(diff[j]) / sc;
    acc += r * r;
  }
  return std::sqrt(acc / 3.0);
}

template <typename Rhs>
double initial_step(const Triad& y0, const Triad& f0, Rhs&& f, double tol,
                    double tau_end) {
  double d0 = 0.0, d1 = 0.0;
  for (int j = 0; j < 3; ++j) {
    const double sc = tol + tol * std::abs(y0[j]);
    d0 = std::max(d0, std::abs(y0[j]) / sc);
    d1 = std::max(d1, std::abs(f0[j]) / sc);
  }
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * (d0 / d1);
  h0 = std::min(h0, tau_end);
  Triad y1 = y0 + h0 * f0;
  if (!is_finite(y1)) return std::min(1e-6, tau_end);
  const Triad f1 = f(y1);
  double d2 = 0.0;
  for (int j = 0; j < 3; ++j) {
    const double sc = tol + tol * std::abs(y0[j]);
    d2 = std::max(d2, std::abs(f1[j] - f0[j]) / sc / h0);
  }
  double h1;
  if (std::max(d1, d2) <= 1e-15) {
    h1 = std::max(1e-6, h0 * 1e-3);
  } else {
    h1 = std::pow(0.01 / std::max(d1, d2), 0.2);
  }
  return std::min({100.0 * h0, h1, tau_end});
}

Trajectory integrate_impl(const Triad& a0, const Coupling& g, double tau_end,
                          const IntegrateOptions& opt, bool reversed) {
  if (!is_finite(a0)) throw InvalidStateError("initial state has non-finite entries");
  if (!(tau_end > 0.0) || !std::isfinite(tau_end))
    throw std::invalid_argument("integration horizon must be positive and finite");
  if (!(opt.tol >= 1e-14 && opt.tol <= 1e-3))
    throw std::invalid_argument("tolerance must lie in [1e-14, 1e-3]");

  const double sign = reversed ? -1.0 : 1.0;
  auto f = [&](const Triad& y) noexcept -> Triad {
    return sign * detail::coupling_rhs(y, g);
  };

  Trajectory traj;
  traj.times.push_back(0.0);
  traj.states.push_back(a0);
  traj.invariant_samples.push_back(invariants(a0, g));

  if (max_modulus(a0) >= opt.blow_up_threshold) {
    traj.termination = Termination::BlowUpDetected;
    traj.t_star = 0.0;
    return traj;
  }

  double t = 0.0;
  Triad y = a0;
  Triad k1 = f(y);
  double h = initial_step(y, k1, f, opt.tol, tau_end);
  double facold = 1e-4;

  for (std::size_t step = 0; step < opt.max_steps; ++step) {
    if (t >= tau_end) break;
    bool last = false;
    if (t + h >= tau_end) {
      h = tau_end - t;
      last = true;
    }
    if (h < opt.min_step && !last) {
      traj.termination = Termination::StepSizeUnderflow;
      return traj;
    }

    const Triad k2 = f(y + h * (a21 * k1));
    const Triad k3 = f(y + h * (a31 * k1 + a32 * k2));
    const Triad k4 = f(y + h * (a41 * k1 + a42 * k2 + a43 * k3));
    const Triad k5 = f(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    const Triad k6 = f(y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    const Triad y1 = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const Triad k7 = f(y1);
    const Triad diff = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    double err = error_norm(y, y1, diff, opt.tol);
    if (!std::isfinite(err)) err = 10.0;  // force a rejection on overflow

    if (err <= 1.0) {
      t = last ? tau_end : t + h;
      y = y1;
      k1 = k7;
      traj.times.push_back(t);
      if (is_finite(y)) {
        traj.states.push_back(y);
        traj.invariant_samples.push_back(invariants(y, g));
        if (max_modulus(y) >= opt.blow_up_threshold) {
          traj.termination = Termination::BlowUpDetected;
          break;
        }
      } else {
        // Keep the time stamp out of the history too: samples only ever
        // hold finite states.
        traj.times.pop_back();
        traj.termination = Termination::BlowUpDetected;
        break;
      }
      const double fac11 = std::pow(err, kExpo1);
      double fac = fac11 / std::pow(facold, kBeta);
      fac = std::max(1.0 / kGrowLimit, std::min(kShrinkLimit, fac / kSafe));
      facold = std::max(err, 1e-4);
      h = h / fac;
    } else {
      const double fac11 = std::pow(err, kExpo1);
      h = h / std::min(kShrinkLimit, fac11 / kSafe);
      last = false;
    }
  }

  if (traj.termination == Termination::BlowUpDetected) {
    try {
      traj.t_star = estimate_blowup_time(traj);
    } catch (const EstimationError&) {
      traj.t_star = traj.final_time() + 1.0 / max_modulus(traj.final_state());
    }
  }
  return traj;
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

}  // namespace

const char* to_string(Termination t) {
  switch (t) {
    case Termination::Completed: return "Completed";
    case Termination::BlowUpDetected: return "BlowUpDetected";
    case Termination::StepSizeUnderflow: return "StepSizeUnderflow";
  }
  return "?";
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Equilibrium: return "Equilibrium";
    case Verdict::GlobalDecay: return "GlobalDecay";
    case Verdict::BlowUpCase1: return "BlowUpCase1";
    case Verdict::BlowUpCase2: return "BlowUpCase2";
    case Verdict::BlowUpCase3: return "BlowUpCase3";
    case Verdict::NearBoundary: return "NearBoundary";
  }
  return "?";
}

Trajectory integrate(const Triad& a0, const Coupling& g, double tau_end,
                     const IntegrateOptions& opt) {
  return integrate_impl(a0, g, tau_end, opt, false);
}

Trajectory integrate(const Triad& a0, const Coupling& g, double tau_end, double tol) {
  IntegrateOptions opt;
  opt.tol = tol;
  return integrate_impl(a0, g, tau_end, opt, false);
}

Trajectory integrate_reversed(const Triad& b0, const Coupling& g, double eta_end,
                              const IntegrateOptions& opt) {
  return integrate_impl(b0, g, eta_end, opt, true);
}

Triad integrate_to(const Triad& a0, const Coupling& g, double tau, double tol) {
  IntegrateOptions opt;
  opt.tol = tol;
  Trajectory traj = integrate_impl(a0, g, tau, opt, false);
  if (traj.termination != Termination::Completed)
    throw EstimationError(std::string("integration ended early: ") +
                          to_string(traj.termination));
  return traj.final_state();
}

std::array<int, 3> descending_modulus_order(const Triad& a) {
  std::array<int, 3> idx{0, 1, 2};
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int i, int j) { return std::abs(a[i]) > std::abs(a[j]); });
  return idx;
}

Classification classify(const Triad& a0, const ClassifyOptions& opt) {
  require_finite(a0);
  Classification out;
  out.descending = descending_modulus_order(a0);
  const RealTriple<double> r = a0.cwiseAbs();

  const double near_zero_hi = opt.boundary_factor * opt.eps_zero;
  int zeros = 0;
  for (int j = 0; j < 3; ++j) {
    if (r[j] <= opt.eps_zero) {
      ++zeros;
    } else if (r[j] <= near_zero_hi) {
      out.verdict = Verdict::NearBoundary;
      out.detail = "modulus " + std::to_string(j + 1) + " sits in the near-zero band (" +
                   fmt("%.3e", r[j]) + ")";
      return out;
    }
  }

  if (zeros >= 2) {
    out.verdict = Verdict::Equilibrium;
    out.detail = "at least two moduli vanish; the state is stationary";
    return out;
  }
  if (zeros == 1) {
    out.verdict = Verdict::BlowUpCase1;
    out.detail = "exactly one modulus vanishes";
    return out;
  }

  const double theta = total_phase(a0);
  const double d_phase = angle_distance(theta, 1.5 * kPi);
  if (d_phase > opt.boundary_factor * opt.eps_phase) {
    out.verdict = Verdict::BlowUpCase3;
    out.detail = "phase sum " + fmt("%.9f", theta) + " is " + fmt("%.3e", d_phase) +
                 " away from the decay ray";
    return out;
  }
  if (d_phase > opt.eps_phase) {
    out.verdict = Verdict::NearBoundary;
    out.detail = "phase sum lies in the near band around the decay ray (distance " +
                 fmt("%.3e", d_phase) + ")";
    return out;
  }

  const double r_min = r[out.descending[2]];
  const double r_mid = r[out.descending[1]];
  const double tie_gap = r_mid - r_min;
  if (tie_gap <= opt.eps_amp) {
    out.verdict = Verdict::GlobalDecay;
    out.detail = "phase sum on the decay ray with the two smallest moduli tied (gap " +
                 fmt("%.3e", tie_gap) + ")";
    return out;
  }
  if (tie_gap <= opt.boundary_factor * opt.eps_amp) {
    out.verdict = Verdict::NearBoundary;
    out.detail = "smallest moduli nearly tied on the decay ray (gap " +
                 fmt("%.3e", tie_gap) + ")";
    return out;
  }
  out.verdict = Verdict::BlowUpCase2;
  out.detail = "phase sum on the decay ray with a strict smallest modulus (gap " +
               fmt("%.3e", tie_gap) + ")";
  return out;
}

double decay_closed_form(double r0, double tau) { return reciprocal_decay(r0, 2.0, tau); }

double reciprocal_decay(double r0, double rate, double tau) {
  if (!(r0 > 0.0) || !std::isfinite(r0)) throw std::invalid_argument("r0 must be positive");
  if (!(rate >= 0.0)) throw std::invalid_argument("rate must be non-negative");
  if (!(tau >= 0.0)) throw std::invalid_argument("tau must be non-negative");
  return r0 / (1.0 + rate * r0 * tau);
}

double blowup_closed_form(double r0, double tau) {
  if (!(r0 > 0.0) || !std::isfinite(r0)) throw std::invalid_argument("r0 must be positive");
  if (!(tau >= 0.0)) throw std::invalid_argument("tau must be non-negative");
  if (tau >= 1.0 / r0)
    throw PastSingularityError("closed form evaluated at or past its pole 1/r0");
  return r0 / (1.0 - r0 * tau);
}

double extrapolate_pole_time(const std::vector<double>& times,
                             const std::vector<double>& reciprocals) {
  const std::size_t k = times.size();
  if (k < 2 || reciprocals.size() != k)
    throw EstimationError("too few samples to extrapolate");
  const double t_last = times.back();

  // Least squares centred at the end of the window to keep the normal
  // equations well conditioned.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double x = times[i] - t_last;
    const double y = reciprocals[i];
    if (!std::isfinite(x) || !std::isfinite(y))
      throw EstimationError("non-finite value inside the fit window");
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double det = k * sxx - sx * sx;
  if (det <= 0.0) throw EstimationError("degenerate time window");
  const double slope = (k * sxy - sx * sy) / det;
  const double icept = (sy * sxx - sx * sxy) / det;
  if (!(slope < 0.0)) throw EstimationError("reciprocal values are not decreasing");
  const double t_cross = t_last - icept / slope;
  if (!(t_cross > t_last)) throw EstimationError("extrapolated pole is not in the future");
  return t_cross;
}

double estimate_blowup_time(const Trajectory& traj, int fit_window) {
  if (fit_window < 2) throw std::invalid_argument("fit window must be at least 2");
  const std::size_t n = traj.size();
  const auto k = static_cast<std::size_t>(fit_window);
  if (n < k) throw EstimationError("too few samples to extrapolate");
  std::vector<double> times, recip;
  times.reserve(k);
  recip.reserve(k);
  for (std::size_t i = n - k; i < n; ++i) {
    const double m = max_modulus(traj.states[i]);
    if (!(m > 0.0)) throw EstimationError("vanishing modulus inside the fit window");
    times.push_back(traj.times[i]);
    recip.push_back(1.0 / m);
  }
  return extrapolate_pole_time(times, recip);
}

InvariantDrift invariant_drift(const Trajectory& traj) {
  InvariantDrift d;
  if (traj.invariant_samples.empty()) return d;
  const InvariantSet ref = traj.invariant_samples.front();
  for (const InvariantSet& s : traj.invariant_samples) {
    d.m12 = std::max(d.m12, std::abs(s.m12 - ref.m12));
    d.m13 = std::max(d.m13, std::abs(s.m13 - ref.m13));
    d.h = std::max(d.h, std::abs(s.h - ref.h));
  }
  return d;
}

PhaseLockReport phase_lock_check(const Trajectory& traj, double phase_tol,
                                 int settle_samples) {
  PhaseLockReport rep;
  rep.settle_samples = settle_samples;
  rep.phase_tolerance = phase_tol;
  const std::size_t n = traj.size();
  if (n == 0) {
    rep.note = "empty trajectory";
    return rep;
  }

  // Locate a single-modulus zero crossing: either the initial state already
  // has exactly one vanishing modulus, or some modulus dips to a strict
  // local minimum far below the other two.
  {
    const RealTriple<double> r0 = traj.states.front().cwiseAbs();
    int zeros = 0, which = -1;
    for (int j = 0; j < 3; ++j)
      if (r0[j] <= kEpsZero) {
        ++zeros;
        which = j;
      }
    if (zeros == 1) {
      rep.applicable = true;
      rep.component = which;
      rep.crossing_sample = 0;
      rep.crossing_time = traj.times.front();
    } else if (zeros >= 2) {
      rep.note = "stationary state, no crossing to lock onto";
      return rep;
    }
  }
  if (!rep.applicable) {
    for (std::size_t k = 1; k + 1 < n && !rep.applicable; ++k) {
      for (int j = 0; j < 3; ++j) {
        const double prev = std::abs(traj.states[k - 1][j]);
        const double here = std::abs(traj.states[k][j]);
        const double next = std::abs(traj.states[k + 1][j]);
        if (here < prev && here < next) {
          double other = std::numeric_limits<double>::infinity();
          for (int l = 0; l < 3; ++l)
            if (l != j) other = std::min(other, std::abs(traj.states[k][l]));
          if (here < 0.1 * other) {
            rep.applicable = true;
            rep.component = j;
            rep.crossing_sample = static_cast<int>(k);
            rep.crossing_time = traj.times[k];
            break;
          }
        }
      }
    }
  }
  if (!rep.applicable) {
    rep.note = "no single-modulus zero crossing found";
    return rep;
  }

  // The h bound below only makes sense while the cubic scale stays small;
  // past a few times the initial envelope, roundoff in h dominates.
  const double h_scale_cap = std::max(3.0, 3.0 * max_modulus(traj.states.front()));
  double max_phase = 0.0, max_h = 0.0;
  int checked = 0;
  const std::size_t first = static_cast<std::size_t>(rep.crossing_sample + settle_samples);
  for (std::size_t k = first; k < n; ++k) {
    const std::complex<double> prod =
        traj.states[k][0] * traj.states[k][1] * traj.states[k][2];
    if (std::abs(prod) < kEpsZero) continue;
    max_phase = std::max(max_phase, angle_distance(std::arg(prod), kHalfPi));
    if (max_modulus(traj.states[k]) <= h_scale_cap)
      max_h = std::max(max_h, std::abs(traj.invariant_samples[k].h));
    ++checked;
  }
  rep.checked_samples = checked;
  if (checked == 0) {
    rep.note = "no usable samples after the settling window";
    return rep;
  }
  rep.max_phase_deviation = max_phase;
  rep.max_h_deviation = max_h;
  rep.locked = max_phase <= phase_tol && max_h <= 1e-8;
  return rep;
}

bool classification_consistent(const Classification& c, const Trajectory& traj) {
  if (c.verdict == Verdict::NearBoundary) return true;
  if (c.blow_up()) return traj.termination == Termination::BlowUpDetected;
  if (traj.termination != Termination::Completed) return false;
  const double before = max_modulus(traj.states.front());
  const double after = max_modulus(traj.final_state());
  if (c.verdict == Verdict::Equilibrium) return std::abs(after - before) <= 1e-9;
  return after < before;  // GlobalDecay
}

ThetaTrend theta_trend(const Trajectory& traj) {
  ThetaTrend out;
  const std::size_t n = traj.size();
  if (n < 2) return out;
  constexpr double floor = kEpsZero * kEpsZero * kEpsZero;
  double prev = 0.0;
  double min_inc = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    const std::complex<double> prod =
        traj.states[k][0] * traj.states[k][1] * traj.states[k][2];
    if (std::abs(prod) < floor) return out;  // undefined phase somewhere: not applicable
    const double theta = std::arg(prod);
    if (k > 0) {
      double d = std::remainder(theta - prev, kTwoPi);
      min_inc = std::min(min_inc, d);
    }
    prev = theta;
  }
  out.applicable = true;
  out.samples = static_cast<int>(n);
  out.min_increment = min_inc;
  out.final_distance_to_half_pi = angle_distance(prev, kHalfPi);
  return out;
}

GrowthLawFit growth_law_residual(const Trajectory& traj, const Coupling& g) {
  GrowthLawFit out;
  if (!g.same_sign() || traj.size() < 3) return out;

  const std::array<int, 3> order = descending_modulus_order(traj.final_state());
  const int jm = order[0];
  const RealTriple<double> r0 = traj.states.front().cwiseAbs();
  const double ka = r0[jm] * r0[jm] - r0[order[1]] * r0[order[1]];
  const double kb = r0[jm] * r0[jm] - r0[order[2]] * r0[order[2]];

  std::vector<double> residuals;
  residuals.reserve(traj.size());
  for (std::size_t k = 1; k + 1 < traj.size(); ++k) {
    const double hp = traj.times[k + 1] - traj.times[k];
    const double hm = traj.times[k] - traj.times[k - 1];
    if (hp <= 0.0 || hm <= 0.0) continue;
    auto sq = [&](std::size_t i) {
      const double m = std::abs(traj.states[i][jm]);
      return m * m;
    };
    // Three point derivative on a non-uniform grid, second order.
    const double fd = (hm * hm * sq(k + 1) + (hp * hp - hm * hm) * sq(k) -
                       hp * hp * sq(k - 1)) /
                      (hp * hm * (hp + hm));
    const double m2 = sq(k);
    const double ua = m2 - ka;
    const double ub = m2 - kb;
    if (ua <= 0.0 || ub <= 0.0) continue;
    const double law = 2.0 * std::sqrt(m2) * std::sqrt(ua) * std::sqrt(ub);
    if (law <= 0.0) continue;
    residuals.push_back(std::abs(std::abs(fd) - law) / law);
  }
  if (residuals.empty()) return out;
  out.applicable = true;
  out.interior_samples = static_cast<int>(residuals.size());
  std::nth_element(residuals.begin(), residuals.begin() + residuals.size() / 2,
                   residuals.end());
  out.median_residual = residuals[residuals.size() / 2];
  return out;
}

}  // namespace wave3
