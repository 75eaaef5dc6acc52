#include "wave3/field.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>

#include "wave3/errors.hpp"

namespace wave3 {
namespace {

using C = std::complex<double>;

bool power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

Eigen::FFT<double>& fft_engine() {
  thread_local Eigen::FFT<double> engine;
  return engine;
}

// Signed mode number of DFT bin m for an n-point transform.
int mode_number(int m, int n) { return m < n / 2 ? m : m - n; }

void shift_axis0(Eigen::ArrayXXcd& u, double a, double d) {
  const int n = static_cast<int>(u.rows());
  Eigen::VectorXcd phase(n), spec(n);
  for (int m = 0; m < n; ++m) {
    const double k = kPi * mode_number(m, n) / a;
    phase[m] = std::polar(1.0, -k * d);
  }
  auto& fft = fft_engine();
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    fft.fwd(spec.data(), u.col(j).data(), n);
    spec.array() *= phase.array();
    fft.inv(u.col(j).data(), spec.data(), n);
  }
}

void shift_axis1(Eigen::ArrayXXcd& u, double a, double d) {
  const int n = static_cast<int>(u.cols());
  Eigen::VectorXcd phase(n), row(n), spec(n);
  for (int m = 0; m < n; ++m) {
    const double k = kPi * mode_number(m, n) / a;
    phase[m] = std::polar(1.0, -k * d);
  }
  auto& fft = fft_engine();
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    for (int m = 0; m < n; ++m) row[m] = u(i, m);
    fft.fwd(spec.data(), row.data(), n);
    spec.array() *= phase.array();
    fft.inv(row.data(), spec.data(), n);
    for (int m = 0; m < n; ++m) u(i, m) = row[m];
  }
}

void nl_rhs(const std::array<Eigen::ArrayXXcd, 3>& a, const Coupling& g,
            std::array<Eigen::ArrayXXcd, 3>& out) {
  out[0] = C(0, g[0]) * (a[1] * a[2]).conjugate();
  out[1] = C(0, g[1]) * (a[0] * a[2]).conjugate();
  out[2] = C(0, g[2]) * (a[0] * a[1]).conjugate();
}

void rk4_coupling(TriadField& field, const Coupling& g, double dt) {
  std::array<Eigen::ArrayXXcd, 3> k1, k2, k3, k4, tmp;
  nl_rhs(field.comp, g, k1);
  for (int j = 0; j < 3; ++j) tmp[j] = field.comp[j] + (0.5 * dt) * k1[j];
  nl_rhs(tmp, g, k2);
  for (int j = 0; j < 3; ++j) tmp[j] = field.comp[j] + (0.5 * dt) * k2[j];
  nl_rhs(tmp, g, k3);
  for (int j = 0; j < 3; ++j) tmp[j] = field.comp[j] + dt * k3[j];
  nl_rhs(tmp, g, k4);
  for (int j = 0; j < 3; ++j)
    field.comp[j] += (dt / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

FieldSample make_sample(const TriadField& field, const Coupling& g, double tau,
                        const FieldRunOptions& opt, const TransportInvariantRef* ref,
                        const Eigen::Vector2d& shared_velocity) {
  FieldSample s;
  s.tau = tau;
  for (int j = 0; j < 3; ++j) {
    const Eigen::ArrayXXd mod = field.comp[j].abs();
    s.comp_min[j] = mod.minCoeff();
    s.comp_max[j] = mod.maxCoeff();
  }
  s.f_min = s.comp_min.minCoeff();
  const IntegralInvariants ii = integral_invariants(field, g);
  s.k12 = ii.k12;
  s.k13 = ii.k13;
  s.tail = tail_fraction(field);
  if (opt.track_phase_sum) s.phase_dev = phase_sum_deviation(field, opt.phase_sum_target);
  if (ref) s.transport_defect = transport_invariant_defect(field, g, *ref,
                                                           shared_velocity, tau);
  return s;
}

}  // namespace

const char* to_string(FieldTermination t) {
  switch (t) {
    case FieldTermination::Completed: return "Completed";
    case FieldTermination::BlowUpReached: return "BlowUpReached";
    case FieldTermination::DriftAbort: return "DriftAbort";
    case FieldTermination::ResolutionAbort: return "ResolutionAbort";
  }
  return "?";
}

PeriodicDomain make_domain(double a1) {
  if (!(a1 > 0.0) || !std::isfinite(a1))
    throw std::invalid_argument("half width must be positive and finite");
  PeriodicDomain d;
  d.dim = 1;
  d.half_width = {a1, 0.0};
  return d;
}

PeriodicDomain make_domain(double a1, double a2) {
  if (!(a1 > 0.0) || !(a2 > 0.0) || !std::isfinite(a1) || !std::isfinite(a2))
    throw std::invalid_argument("half widths must be positive and finite");
  PeriodicDomain d;
  d.dim = 2;
  d.half_width = {a1, a2};
  return d;
}

VelocitySet uniform_velocity(const Eigen::Vector2d& c) {
  VelocitySet v;
  v.c = {c, c, c};
  return v;
}

double TriadField::cell_measure() const {
  double m = 2.0 * domain.half_width[0] / shape[0];
  if (domain.dim == 2) m *= 2.0 * domain.half_width[1] / shape[1];
  return m;
}

double TriadField::coord(int axis, int index) const {
  const double a = domain.half_width[axis];
  return -a + index * (2.0 * a / shape[axis]);
}

double TriadField::max_modulus() const {
  double m = 0.0;
  for (const auto& u : comp) m = std::max(m, u.abs().maxCoeff());
  return m;
}

bool TriadField::is_finite() const {
  for (const auto& u : comp)
    if (!u.isFinite().all()) return false;
  return true;
}

Triad TriadField::at(int i1, int i2) const {
  Triad a;
  a << comp[0](i1, i2), comp[1](i1, i2), comp[2](i1, i2);
  return a;
}

TriadField make_field(const PeriodicDomain& domain, int n1, int n2) {
  if (domain.dim != 1 && domain.dim != 2)
    throw std::invalid_argument("domain dimension must be 1 or 2");
  if (!power_of_two(n1))
    throw std::invalid_argument("grid size along axis 1 must be a power of two");
  if (domain.dim == 1) {
    if (n2 != 1) throw std::invalid_argument("one-dimensional fields need n2 == 1");
  } else if (!power_of_two(n2)) {
    throw std::invalid_argument("grid size along axis 2 must be a power of two");
  }
  TriadField f;
  f.domain = domain;
  f.shape = {n1, n2};
  for (auto& u : f.comp) u = Eigen::ArrayXXcd::Zero(n1, n2);
  return f;
}

TriadField constant_field(const PeriodicDomain& domain, int n1, int n2,
                          const Triad& value) {
  TriadField f = make_field(domain, n1, n2);
  for (int j = 0; j < 3; ++j) f.comp[j].setConstant(value[j]);
  return f;
}

void spectral_shift(Eigen::ArrayXXcd& u, const PeriodicDomain& domain,
                    const Eigen::Vector2d& displacement) {
  if (!displacement.allFinite())
    throw std::invalid_argument("displacement must be finite");
  if (displacement[0] != 0.0) shift_axis0(u, domain.half_width[0], displacement[0]);
  if (domain.dim == 2 && displacement[1] != 0.0)
    shift_axis1(u, domain.half_width[1], displacement[1]);
}

void advect(TriadField& field, const VelocitySet& velocities, double dt) {
  if (!std::isfinite(dt)) throw std::invalid_argument("dt must be finite");
  for (int j = 0; j < 3; ++j)
    spectral_shift(field.comp[j], field.domain, velocities.c[j] * dt);
}

double tail_fraction(const Eigen::ArrayXXcd& u, const PeriodicDomain& domain) {
  const int n1 = static_cast<int>(u.rows());
  const int n2 = static_cast<int>(u.cols());
  Eigen::ArrayXXcd spec_arr = u;
  auto& fft = fft_engine();
  {
    Eigen::VectorXcd spec(n1);
    for (Eigen::Index j = 0; j < spec_arr.cols(); ++j) {
      fft.fwd(spec.data(), spec_arr.col(j).data(), n1);
      spec_arr.col(j) = spec.array();
    }
  }
  if (domain.dim == 2 && n2 > 1) {
    Eigen::VectorXcd row(n2), spec(n2);
    for (Eigen::Index i = 0; i < spec_arr.rows(); ++i) {
      for (int m = 0; m < n2; ++m) row[m] = spec_arr(i, m);
      fft.fwd(spec.data(), row.data(), n2);
      for (int m = 0; m < n2; ++m) spec_arr(i, m) = spec[m];
    }
  }
  double total = 0.0, tail = 0.0;
  for (int m2 = 0; m2 < n2; ++m2) {
    const bool tail2 = n2 > 1 && 3 * std::abs(mode_number(m2, n2)) >= n2;
    for (int m1 = 0; m1 < n1; ++m1) {
      const double e = std::norm(spec_arr(m1, m2));
      total += e;
      if (tail2 || 3 * std::abs(mode_number(m1, n1)) >= n1) tail += e;
    }
  }
  return total > 0.0 ? tail / total : 0.0;
}

double tail_fraction(const TriadField& field) {
  double worst = 0.0;
  for (const auto& u : field.comp)
    worst = std::max(worst, tail_fraction(u, field.domain));
  return worst;
}

std::optional<BlowUpEvent> scan_field(const TriadField& field, double threshold) {
  const double thr2 = threshold * threshold;
  const int n1 = field.shape[0];
  for (int j = 0; j < 3; ++j) {
    const C* p = field.comp[j].data();
    const Eigen::Index n = field.comp[j].size();
    for (Eigen::Index idx = 0; idx < n; ++idx) {
      const double re = p[idx].real(), im = p[idx].imag();
      BlowUpEvent ev;
      if (!std::isfinite(re) || !std::isfinite(im)) {
        ev.value = std::numeric_limits<double>::infinity();
      } else {
        const double a2 = re * re + im * im;
        if (a2 < thr2) continue;
        ev.value = std::sqrt(a2);
      }
      ev.component = j;
      ev.where = {static_cast<int>(idx % n1), static_cast<int>(idx / n1)};
      return ev;
    }
  }
  return std::nullopt;
}

std::optional<BlowUpEvent> nonlinear_step(TriadField& field, const Coupling& g,
                                          double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt))
    throw std::invalid_argument("dt must be positive and finite");
  rk4_coupling(field, g, dt);
  return scan_field(field, std::numeric_limits<double>::infinity());
}

std::optional<BlowUpEvent> step_strang(TriadField& field, const Coupling& g,
                                       const VelocitySet& velocities, double dt,
                                       double threshold) {
  if (!(dt > 0.0) || !std::isfinite(dt))
    throw std::invalid_argument("dt must be positive and finite");
  TriadField entry = field;
  advect(field, velocities, 0.5 * dt);
  rk4_coupling(field, g, dt);
  if (auto ev = scan_field(field, threshold)) {
    field = std::move(entry);
    return ev;
  }
  advect(field, velocities, 0.5 * dt);
  return std::nullopt;
}

IntegralInvariants integral_invariants(const TriadField& field, const Coupling& g) {
  const double n1 = field.comp[0].abs2().sum();
  const double n2 = field.comp[1].abs2().sum();
  const double n3 = field.comp[2].abs2().sum();
  const double cell = field.cell_measure();
  return {(g[1] * n1 - g[0] * n2) * cell, (g[2] * n1 - g[0] * n3) * cell};
}

double grid_min_amplitude(const TriadField& field) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& u : field.comp) m = std::min(m, u.abs().minCoeff());
  return m;
}

double riccati_lower_bound(double f0, double tau0, double tau) {
  if (!(f0 > 0.0) || !std::isfinite(f0))
    throw std::invalid_argument("floor value must be positive and finite");
  if (!(tau >= tau0)) throw std::invalid_argument("tau must not precede tau0");
  const double c0 = 0.99 * f0;
  const double denom = 1.0 - c0 * (tau - tau0);
  if (denom <= 0.0)
    throw PastSingularityError("lower bound evaluated at or past its pole");
  return c0 / denom;
}

double phase_sum_deviation(const TriadField& field, double target) {
  constexpr double floor = kEpsZero * kEpsZero * kEpsZero;
  const C* p1 = field.comp[0].data();
  const C* p2 = field.comp[1].data();
  const C* p3 = field.comp[2].data();
  const Eigen::Index n = field.comp[0].size();
  double worst = std::numeric_limits<double>::quiet_NaN();
  for (Eigen::Index idx = 0; idx < n; ++idx) {
    const C prod = p1[idx] * p2[idx] * p3[idx];
    if (std::abs(prod) < floor) continue;
    const double dev = angle_distance(std::arg(prod), target);
    if (std::isnan(worst) || dev > worst) worst = dev;
  }
  return worst;
}

TransportInvariantRef transport_invariant_reference(const TriadField& field,
                                                    const Coupling& g) {
  TransportInvariantRef ref;
  ref.k12 = (double(g[1]) * field.comp[0].abs2() - double(g[0]) * field.comp[1].abs2())
                .cast<C>();
  ref.k13 = (double(g[2]) * field.comp[0].abs2() - double(g[0]) * field.comp[2].abs2())
                .cast<C>();
  return ref;
}

double transport_invariant_defect(const TriadField& field, const Coupling& g,
                                  const TransportInvariantRef& ref,
                                  const Eigen::Vector2d& velocity, double tau) {
  Eigen::ArrayXXcd moved12 = ref.k12;
  Eigen::ArrayXXcd moved13 = ref.k13;
  // The initial combination rides along x + c*tau, which is a shift of the
  // field contents by +c*tau.
  spectral_shift(moved12, field.domain, velocity * tau);
  spectral_shift(moved13, field.domain, velocity * tau);
  const Eigen::ArrayXXd now12 =
      double(g[1]) * field.comp[0].abs2() - double(g[0]) * field.comp[1].abs2();
  const Eigen::ArrayXXd now13 =
      double(g[2]) * field.comp[0].abs2() - double(g[0]) * field.comp[2].abs2();
  const double d12 = (now12 - moved12.real()).abs().maxCoeff();
  const double d13 = (now13 - moved13.real()).abs().maxCoeff();
  return std::max(d12, d13);
}

FieldTrajectory run_pde(const TriadField& initial, const Coupling& g,
                        const VelocitySet& velocities, const FieldRunOptions& opt) {
  if (!(opt.dt > 0.0) || !std::isfinite(opt.dt))
    throw std::invalid_argument("dt must be positive and finite");
  if (!(opt.tau_end > 0.0) || !std::isfinite(opt.tau_end))
    throw std::invalid_argument("tau_end must be positive and finite");
  if (opt.sample_every_steps < 1)
    throw std::invalid_argument("sample cadence must be at least one step");
  if (opt.track_transport && !velocities.all_equal())
    throw std::invalid_argument("transport tracking needs one shared velocity");
  if (!initial.is_finite())
    throw InvalidStateError("initial field has non-finite entries");

  FieldTrajectory out;
  TriadField field = initial;
  const Eigen::Vector2d shared_velocity = velocities.c[0];
  TransportInvariantRef ref;
  if (opt.track_transport) ref = transport_invariant_reference(field, g);
  const TransportInvariantRef* refp = opt.track_transport ? &ref : nullptr;

  auto push_sample = [&](double tau) {
    out.samples.push_back(make_sample(field, g, tau, opt, refp, shared_velocity));
    FieldSample& s = out.samples.back();
    if (s.tail > opt.tail_tol && std::isnan(out.first_tail_warning))
      out.first_tail_warning = tau;
    const int index = static_cast<int>(out.samples.size()) - 1;
    if (opt.snapshot_hook && opt.snapshot_every > 0 && index % opt.snapshot_every == 0)
      opt.snapshot_hook(field, tau, index);
    return s;
  };

  const FieldSample first = push_sample(0.0);
  const double k12_ref = first.k12;
  const double k13_ref = first.k13;

  if (auto ev = scan_field(field, opt.blow_up_threshold)) {
    out.termination = FieldTermination::BlowUpReached;
    out.blow_up = *ev;
    out.stop_time = 0.0;
    out.t_star = 0.0;
    out.final_field = std::move(field);
    return out;
  }

  const long n_steps = std::max<long>(1, std::lround(std::ceil(opt.tau_end / opt.dt - 1e-9)));
  for (long step = 1; step <= n_steps; ++step) {
    const bool last = step == n_steps;
    const double dt = last ? opt.tau_end - (n_steps - 1) * opt.dt : opt.dt;
    const double t = last ? opt.tau_end : step * opt.dt;
    // One step of terminal growth moves the envelope by an order of itself;
    // from there only the blow-up scan is trustworthy, so the safety
    // monitors stand down.
    const bool runaway = field.max_modulus() * dt >= 0.1;

    if (auto ev = step_strang(field, g, velocities, dt, opt.blow_up_threshold)) {
      out.termination = FieldTermination::BlowUpReached;
      out.blow_up = *ev;
      out.stop_time = t;
      const double t_prev = (step - 1) * opt.dt;
      if (out.samples.back().tau < t_prev - 1e-15) push_sample(t_prev);
      break;
    }

    if (step % opt.sample_every_steps == 0 || last) {
      const FieldSample s = push_sample(t);
      if (!runaway) {
        const bool drifted =
            std::abs(s.k12 - k12_ref) > opt.drift_abort_tol * std::max(1.0, std::abs(k12_ref)) ||
            std::abs(s.k13 - k13_ref) > opt.drift_abort_tol * std::max(1.0, std::abs(k13_ref));
        if (drifted) {
          out.termination = FieldTermination::DriftAbort;
          out.stop_time = t;
          break;
        }
        if (s.tail > opt.tail_tol) {
          out.termination = FieldTermination::ResolutionAbort;
          out.stop_time = t;
          break;
        }
      }
    }
    if (last) out.stop_time = opt.tau_end;
  }

  if (out.termination == FieldTermination::BlowUpReached) {
    const std::size_t n = out.samples.size();
    const std::size_t k = std::min<std::size_t>(opt.fit_window, n);
    std::vector<double> ts, rec;
    for (std::size_t i = n - k; i < n; ++i) {
      if (out.samples[i].f_min > 0.0) {
        ts.push_back(out.samples[i].tau);
        rec.push_back(1.0 / out.samples[i].f_min);
      }
    }
    try {
      out.t_star = extrapolate_pole_time(ts, rec);
    } catch (const EstimationError&) {
      const double f_last = out.samples.back().f_min;
      out.t_star = f_last > 0.0 ? out.stop_time + 1.0 / f_last
                                : std::numeric_limits<double>::quiet_NaN();
    }
  }
  out.final_field = std::move(field);
  return out;
}

void write_field_snapshot(std::ostream& os, const TriadField& field, double tau) {
  os << "wave3 field snapshot v1\n";
  os << "dim " << field.domain.dim << "\n";
  os << "shape " << field.shape[0] << ' ' << field.shape[1] << "\n";
  os << "half_width " << fmt17(field.domain.half_width[0]) << ' '
     << fmt17(field.domain.half_width[1]) << "\n";
  os << "tau " << fmt17(tau) << "\n";
  const Eigen::Index n = field.points();
  const C* p1 = field.comp[0].data();
  const C* p2 = field.comp[1].data();
  const C* p3 = field.comp[2].data();
  for (Eigen::Index i = 0; i < n; ++i) {
    os << fmt17(p1[i].real()) << ' ' << fmt17(p1[i].imag()) << ' '
       << fmt17(p2[i].real()) << ' ' << fmt17(p2[i].imag()) << ' '
       << fmt17(p3[i].real()) << ' ' << fmt17(p3[i].imag()) << '\n';
  }
}

std::pair<TriadField, double> read_field_snapshot(std::istream& is) {
  auto fail = [](const std::string& what) -> std::runtime_error {
    return std::runtime_error("malformed field snapshot: " + what);
  };
  std::string line;
  if (!std::getline(is, line) || line != "wave3 field snapshot v1")
    throw fail("bad magic line");
  std::string key;
  int dim = 0, n1 = 0, n2 = 0;
  double a1 = 0, a2 = 0, tau = 0;
  if (!(is >> key >> dim) || key != "dim") throw fail("missing dim");
  if (!(is >> key >> n1 >> n2) || key != "shape") throw fail("missing shape");
  if (!(is >> key >> a1 >> a2) || key != "half_width") throw fail("missing half_width");
  if (!(is >> key >> tau) || key != "tau") throw fail("missing tau");
  PeriodicDomain dom;
  if (dim == 1)
    dom = make_domain(a1);
  else if (dim == 2)
    dom = make_domain(a1, a2);
  else
    throw fail("dimension must be 1 or 2");
  TriadField f = make_field(dom, n1, n2);
  const Eigen::Index n = f.points();
  C* p1 = f.comp[0].data();
  C* p2 = f.comp[1].data();
  C* p3 = f.comp[2].data();
  for (Eigen::Index i = 0; i < n; ++i) {
    double v[6];
    for (double& x : v)
      if (!(is >> x)) throw fail("truncated grid data");
    p1[i] = C(v[0], v[1]);
    p2[i] = C(v[2], v[3]);
    p3[i] = C(v[4], v[5]);
  }
  return {std::move(f), tau};
}

std::uint64_t field_hash(const TriadField& field) {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&h](const void* data, std::size_t nbytes) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < nbytes; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  mix(&field.domain.dim, sizeof field.domain.dim);
  mix(field.domain.half_width.data(), 2 * sizeof(double));
  mix(field.shape.data(), 2 * sizeof(int));
  for (const auto& u : field.comp) mix(u.data(), sizeof(C) * u.size());
  return h;
}

}  // namespace wave3
