#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

#include "wave3/ode.hpp"
#include "wave3/triad.hpp"

namespace wave3 {

/// Rectangle centred at the origin with periodic edges. The second axis is
/// ignored when dim is 1.
struct PeriodicDomain {
  int dim = 1;
  Eigen::Vector2d half_width{kPi, kPi};

  double measure() const {
    double m = 2.0 * half_width[0];
    if (dim == 2) m *= 2.0 * half_width[1];
    return m;
  }
};

PeriodicDomain make_domain(double a1);
PeriodicDomain make_domain(double a1, double a2);

/// Per-wave transport velocities. The second coordinate is ignored in 1D.
struct VelocitySet {
  std::array<Eigen::Vector2d, 3> c{Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero(),
                                   Eigen::Vector2d::Zero()};

  bool all_equal() const {
    return c[0] == c[1] && c[1] == c[2];
  }
};

VelocitySet uniform_velocity(const Eigen::Vector2d& c);

/// The three complex wave envelopes on a shared periodic grid, stored
/// column-major with shape (N1, N2); N2 stays 1 in one dimension.
struct TriadField {
  PeriodicDomain domain;
  Eigen::Vector2i shape{0, 1};
  std::array<Eigen::ArrayXXcd, 3> comp;

  Eigen::Index points() const {
    return static_cast<Eigen::Index>(shape[0]) * shape[1];
  }
  double cell_measure() const;
  /// Grid coordinate along an axis: -a + i * (2a / N).
  double coord(int axis, int index) const;
  double max_modulus() const;
  bool is_finite() const;
  /// Uniform-in-space state at one grid point.
  Triad at(int i1, int i2 = 0) const;
};

/// Zero-filled field. Grid sizes must be powers of two along active axes;
/// n2 must be 1 for a one-dimensional domain.
TriadField make_field(const PeriodicDomain& domain, int n1, int n2 = 1);

/// Field holding the same triad at every point.
TriadField constant_field(const PeriodicDomain& domain, int n1, int n2,
                          const Triad& value);

/// Translate one envelope by `displacement` using the exact band-limited
/// shift: transform, rotate each mode, transform back.
void spectral_shift(Eigen::ArrayXXcd& u, const PeriodicDomain& domain,
                    const Eigen::Vector2d& displacement);

/// Solve the pure transport part over dt: each wave moves with its own
/// velocity.
void advect(TriadField& field, const VelocitySet& velocities, double dt);

/// Fraction of one envelope's spectral energy carried by the top third of
/// mode numbers along any axis.
double tail_fraction(const Eigen::ArrayXXcd& u, const PeriodicDomain& domain);

/// Largest tail fraction across the three envelopes.
double tail_fraction(const TriadField& field);

struct GridIndex {
  int i1 = 0;
  int i2 = 0;
};

struct BlowUpEvent {
  GridIndex where;
  int component = -1;
  double value = 0.0;  // offending modulus; +inf when the entry went non-finite
};

/// First grid entry that is non-finite or at/above the threshold, if any.
std::optional<BlowUpEvent> scan_field(const TriadField& field, double threshold);

/// Classical fourth-order step of the pointwise coupling at every grid
/// point, ignoring transport. dt must be positive. A non-finite result at
/// any grid point is reported with its location; the field keeps the
/// stepped values either way.
std::optional<BlowUpEvent> nonlinear_step(TriadField& field, const Coupling& g,
                                          double dt);

/// One split step: half advection, full pointwise coupling step, half
/// advection. When the coupling substep drives some entry past `threshold`
/// (or out of the finite range) the field is rolled back to the state at
/// entry and the offending location is reported.
std::optional<BlowUpEvent> step_strang(TriadField& field, const Coupling& g,
                                       const VelocitySet& velocities, double dt,
                                       double threshold = kBlowUpThreshold);

struct IntegralInvariants {
  double k12 = 0.0;
  double k13 = 0.0;
};

/// Domain integrals of the two quadratic conserved combinations. These stay
/// constant for every sign pattern and every velocity set.
IntegralInvariants integral_invariants(const TriadField& field, const Coupling& g);

/// Smallest modulus over all grid points and all three waves.
double grid_min_amplitude(const TriadField& field);

/// Envelope floor C0 / (1 - C0 (tau - tau0)) with C0 = 0.99 f0.
/// Throws PastSingularityError at or beyond the pole tau0 + 1/C0.
double riccati_lower_bound(double f0, double tau0, double tau);

/// Largest circular distance of the pointwise phase sum from `target`.
/// Points whose amplitude product vanishes are skipped; NaN if all are.
double phase_sum_deviation(const TriadField& field, double target);

/// Initial quadratic combinations, kept for comparison against their
/// transported images.
struct TransportInvariantRef {
  Eigen::ArrayXXcd k12, k13;
};

TransportInvariantRef transport_invariant_reference(const TriadField& field,
                                                    const Coupling& g);

/// Sup-norm mismatch between the current quadratic combinations and the
/// initial ones carried along x + c*tau. Meaningful when all three waves
/// share one velocity and exactly one coupling sign differs.
double transport_invariant_defect(const TriadField& field, const Coupling& g,
                                  const TransportInvariantRef& ref,
                                  const Eigen::Vector2d& velocity, double tau);

struct FieldSample {
  double tau = 0.0;
  double f_min = 0.0;                       // smallest modulus anywhere
  Eigen::Vector3d comp_min, comp_max;       // per-wave modulus extrema
  double k12 = 0.0, k13 = 0.0;              // integral invariants
  double tail = 0.0;                        // worst spectral tail fraction
  double phase_dev = std::numeric_limits<double>::quiet_NaN();
  double transport_defect = std::numeric_limits<double>::quiet_NaN();
};

enum class FieldTermination { Completed, BlowUpReached, DriftAbort, ResolutionAbort };

const char* to_string(FieldTermination t);

struct FieldRunOptions {
  double dt = 1e-3;
  double tau_end = 1.0;
  int sample_every_steps = 1;
  double blow_up_threshold = kBlowUpThreshold;
  double drift_abort_tol = 1e-4;   // relative, on the integral invariants
  double tail_tol = 1e-6;          // spectral tail fraction triggering an abort
  bool track_phase_sum = false;
  double phase_sum_target = kHalfPi;
  bool track_transport = false;    // requires a shared velocity
  int fit_window = kFitWindow;
  /// Called with (field, tau, sample index) every snapshot_every samples.
  std::function<void(const TriadField&, double, int)> snapshot_hook;
  int snapshot_every = 0;
};

struct FieldTrajectory {
  std::vector<FieldSample> samples;
  FieldTermination termination = FieldTermination::Completed;
  double stop_time = 0.0;
  std::optional<BlowUpEvent> blow_up;
  double t_star = std::numeric_limits<double>::quiet_NaN();
  /// First time the tail fraction exceeded tail_tol, NaN if never.
  double first_tail_warning = std::numeric_limits<double>::quiet_NaN();
  TriadField final_field;
};

/// March the split scheme at fixed dt and collect diagnostics. Safety
/// monitors (invariant drift, spectral tail) abort the run unless the state
/// is already in terminal growth, where one step moves the envelope by an
/// order of itself; past that point only the blow-up scan decides.
FieldTrajectory run_pde(const TriadField& initial, const Coupling& g,
                        const VelocitySet& velocities, const FieldRunOptions& opt);

/// Plain-text snapshot, one grid point per line, lossless round trip.
void write_field_snapshot(std::ostream& os, const TriadField& field, double tau);
std::pair<TriadField, double> read_field_snapshot(std::istream& is);

/// FNV-1a over the raw envelope bytes; equal fields hash equal on one
/// platform, used to pin down deterministic generation.
std::uint64_t field_hash(const TriadField& field);

}  // namespace wave3
