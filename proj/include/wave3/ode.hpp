#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "wave3/triad.hpp"

namespace wave3 {

inline constexpr double kDefaultTol = 1e-10;
inline constexpr double kBlowUpThreshold = 1e8;
inline constexpr double kMinStep = 1e-12;
inline constexpr int kFitWindow = 10;

enum class Termination { Completed, BlowUpDetected, StepSizeUnderflow };

const char* to_string(Termination t);

/// Accepted-step history of one uniform-triad integration.
struct Trajectory {
  std::vector<double> times;
  std::vector<Triad> states;
  std::vector<InvariantSet> invariant_samples;
  Termination termination = Termination::Completed;
  /// Extrapolated singularity time; NaN unless termination is BlowUpDetected.
  double t_star = std::numeric_limits<double>::quiet_NaN();

  std::size_t size() const { return times.size(); }
  double final_time() const { return times.back(); }
  const Triad& final_state() const { return states.back(); }
};

struct IntegrateOptions {
  double tol = kDefaultTol;                      // both absolute and relative
  double blow_up_threshold = kBlowUpThreshold;   // stop once any modulus reaches it
  double min_step = kMinStep;
  std::size_t max_steps = 50'000'000;
};

/// Integrate the uniform triad forward from tau = 0 to tau_end with an
/// adaptive embedded 5(4) pair. Every accepted step becomes a sample.
/// Requires a finite initial state, tau_end > 0 and tol in [1e-14, 1e-3].
Trajectory integrate(const Triad& a0, const Coupling& g, double tau_end,
                     const IntegrateOptions& opt = {});
Trajectory integrate(const Triad& a0, const Coupling& g, double tau_end, double tol);

/// Same dynamics run backwards in time (the sign-flipped vector field).
Trajectory integrate_reversed(const Triad& b0, const Coupling& g, double eta_end,
                              const IntegrateOptions& opt = {});

/// State at exactly tau, discarding the history.
Triad integrate_to(const Triad& a0, const Coupling& g, double tau,
                   double tol = kDefaultTol);

enum class Verdict {
  Equilibrium,
  GlobalDecay,
  BlowUpCase1,
  BlowUpCase2,
  BlowUpCase3,
  NearBoundary,
};

const char* to_string(Verdict v);

struct ClassifyOptions {
  double eps_zero = kEpsZero;
  double eps_phase = kEpsPhase;
  double eps_amp = kEpsAmp;
  double boundary_factor = 10.0;
};

struct Classification {
  Verdict verdict;
  std::array<int, 3> descending;  // component indices ordered by modulus, largest first
  std::string detail;

  bool blow_up() const {
    return verdict == Verdict::BlowUpCase1 || verdict == Verdict::BlowUpCase2 ||
           verdict == Verdict::BlowUpCase3;
  }
};

/// Predict the fate of an all-plus coupling triad from its initial data
/// alone. States within a factor boundary_factor of a decision surface are
/// reported NearBoundary instead of being forced into a case.
Classification classify(const Triad& a0, const ClassifyOptions& opt = {});

/// Reference profile r0 / (1 + 2 r0 tau) for the symmetric decaying state.
/// reciprocal_decay generalises the rate; the acceptance suite records which
/// rate constant the integrator actually tracks. Requires r0 > 0, tau >= 0.
double decay_closed_form(double r0, double tau);

/// r0 / (1 + rate * r0 * tau). Requires r0 > 0, rate >= 0, tau >= 0.
double reciprocal_decay(double r0, double rate, double tau);

/// r0 / (1 - r0 tau). Throws PastSingularityError once tau >= 1/r0.
double blowup_closed_form(double r0, double tau);

/// Straight-line fit of 1/max-modulus over the last fit_window samples,
/// extrapolated to zero. Throws EstimationError when fewer than two samples
/// are available or the fitted trend does not point at a future singularity.
double estimate_blowup_time(const Trajectory& traj, int fit_window = kFitWindow);

/// Least-squares pole time for decreasing reciprocal data: fit a line to
/// (times, reciprocals) and return where it crosses zero. Throws
/// EstimationError unless the trend points at a time past the last sample.
double extrapolate_pole_time(const std::vector<double>& times,
                             const std::vector<double>& reciprocals);

struct InvariantDrift {
  double m12 = 0.0;
  double m13 = 0.0;
  double h = 0.0;
  double max_abs() const { return std::max(m12, std::max(m13, h)); }
};

/// Largest absolute deviation of each conserved combination from its
/// initial value over the whole sample history.
InvariantDrift invariant_drift(const Trajectory& traj);

struct PhaseLockReport {
  bool applicable = false;  // a single-modulus zero crossing was identified
  int component = -1;
  int crossing_sample = -1;
  double crossing_time = std::numeric_limits<double>::quiet_NaN();
  int settle_samples = 0;
  double phase_tolerance = 0.0;
  double max_phase_deviation = std::numeric_limits<double>::quiet_NaN();
  double max_h_deviation = std::numeric_limits<double>::quiet_NaN();
  int checked_samples = 0;
  bool locked = false;
  std::string note;
};

/// After one modulus crosses zero the phase sum must sit at pi/2 and h at 0.
/// The h bound is only meaningful while the state stays within a few times
/// its initial scale; the cubic magnitude amplifies roundoff beyond that.
PhaseLockReport phase_lock_check(const Trajectory& traj, double phase_tol = 1e-6,
                                 int settle_samples = 5);

/// Does the integration outcome match the predicted verdict? NearBoundary
/// is compatible with anything; blow-up verdicts require BlowUpDetected;
/// GlobalDecay requires completion with a shrinking envelope; Equilibrium
/// requires the state to have stayed put.
bool classification_consistent(const Classification& c, const Trajectory& traj);

struct ThetaTrend {
  bool applicable = false;       // every sample carried a defined phase sum
  double min_increment = std::numeric_limits<double>::quiet_NaN();
  double final_distance_to_half_pi = std::numeric_limits<double>::quiet_NaN();
  int samples = 0;
};

/// Unwrapped phase-sum increments along a trajectory. For a growing state
/// with no vanishing modulus the increments stay non-negative and the phase
/// sum settles at pi/2.
ThetaTrend theta_trend(const Trajectory& traj);

struct GrowthLawFit {
  bool applicable = false;
  double median_residual = std::numeric_limits<double>::quiet_NaN();
  int interior_samples = 0;
};

/// Residual of the dominant modulus against the autonomous growth law
/// d(r^2)/dtau = 2 r sqrt(r^2 - Ka) sqrt(r^2 - Kb), with Ka, Kb fixed by the
/// initial invariants. Differences are centred, so the residual is relative
/// second-order. Only defined for the all-plus coupling.
GrowthLawFit growth_law_residual(const Trajectory& traj, const Coupling& g);

/// Component order by initial modulus, largest first; ties keep index order.
std::array<int, 3> descending_modulus_order(const Triad& a);

}  // namespace wave3
