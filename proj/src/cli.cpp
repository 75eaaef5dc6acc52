#include "wave3/cli.hpp"

#include <atomic>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "wave3/errors.hpp"
#include "wave3/field.hpp"
#include "wave3/ode.hpp"
#include "wave3/scenario.hpp"
#include "wave3/triad.hpp"

namespace wave3 {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNearBoundary = 2;
constexpr int kExitDriftAbort = 3;
constexpr int kExitResolutionAbort = 4;
constexpr int kExitUnderflow = 5;

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string g3(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string timestamp_line() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[64];
  std::strftime(buf, sizeof buf, "# generated %Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string triple_text(const Triad& a) {
  std::string s;
  for (int j = 0; j < 3; ++j) {
    if (j) s += ' ';
    s += '(' + g17(a[j].real()) + ", " + g17(a[j].imag()) + ')';
  }
  return s;
}

std::string coupling_text(const Coupling& g) {
  std::string s = "(";
  for (int j = 0; j < 3; ++j) {
    if (j) s += ", ";
    s += g[j] > 0 ? "+1" : "-1";
  }
  return s + ")";
}

// Shared per-command flags.
struct CommonFlags {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out_path;
  int snapshot_every = 0;
  bool no_timestamp = false;
};

std::string resolve_out_path(const std::string& path) {
  if (path.empty()) return path;
  const std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  if (const char* dir = std::getenv("WAVE3_OUT_DIR"); dir && *dir)
    return (std::filesystem::path(dir) / p).string();
  return path;
}

std::filesystem::path snapshot_directory(const std::string& resolved_out) {
  if (!resolved_out.empty()) {
    const auto parent = std::filesystem::path(resolved_out).parent_path();
    if (!parent.empty()) return parent;
  }
  if (const char* dir = std::getenv("WAVE3_OUT_DIR"); dir && *dir)
    return std::filesystem::path(dir);
  return std::filesystem::path(".");
}

std::optional<ScenarioConfig> load_config(const std::string& path, std::ostream& err) {
  std::ifstream in(path);
  if (!in) {
    err << "error: cannot read config file '" << path << "'\n";
    return std::nullopt;
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  ParseResult parsed = parse_config(buffer.str());
  if (!parsed.ok()) {
    err << "config errors in '" << path << "':\n" << format_issues(parsed.issues);
    return std::nullopt;
  }
  return std::move(parsed.config);
}

// Emit CSV text either to the stream or to the resolved file path.
bool deliver_csv(const std::string& csv, const std::string& resolved_out,
                 std::ostream& out, std::ostream& err) {
  if (resolved_out.empty()) {
    out << csv;
    return true;
  }
  std::ofstream file(resolved_out);
  if (!file) {
    err << "error: cannot write '" << resolved_out << "'\n";
    return false;
  }
  file << csv;
  return true;
}

void deliver_report(const RunReport& report, const std::string& resolved_out,
                    std::ostream& err) {
  render_report(report, err);
  if (!resolved_out.empty()) {
    std::ofstream file(resolved_out + ".report");
    if (file) render_report(report, file);
  }
}

CheckResult pass_fail(std::string name, bool ok, std::string detail) {
  return {std::move(name),
          ok ? CheckResult::State::Pass : CheckResult::State::Fail,
          std::move(detail)};
}

CheckResult skip(std::string name, std::string why) {
  return {std::move(name), CheckResult::State::Skip, std::move(why)};
}

// ---------------------------------------------------------------------------
// classify

int cmd_classify(const std::string& triple_arg, const std::string& config_path,
                 std::ostream& out, std::ostream& err) {
  if (triple_arg.empty() == config_path.empty()) {
    err << "error: classify needs exactly one of --triple or --config\n";
    return kExitUsage;
  }
  Triad a0;
  if (!triple_arg.empty()) {
    std::string parse_error;
    const auto parsed = parse_triple(triple_arg, &parse_error);
    if (!parsed) {
      err << "error: malformed triple: " << parse_error << '\n';
      return kExitUsage;
    }
    a0 = *parsed;
  } else {
    const auto cfg = load_config(config_path, err);
    if (!cfg) return kExitUsage;
    if (cfg->kind != ScenarioKind::Ode) {
      err << "error: classify works on ode scenarios\n";
      return kExitUsage;
    }
    if (cfg->gamma != Coupling(1, 1, 1)) {
      err << "error: the classification theory covers same-sign coupling (1, 1, 1)\n";
      return kExitUsage;
    }
    a0 = initial_triple(*cfg);
  }

  const Classification cls = classify(a0);
  out << "verdict: " << to_string(cls.verdict) << '\n';
  out << "order: A" << cls.descending[0] + 1 << " >= A" << cls.descending[1] + 1
      << " >= A" << cls.descending[2] + 1 << '\n';
  std::string theta_text = "undefined";
  try {
    theta_text = g17(total_phase(a0));
  } catch (const PhaseUndefinedError&) {
  }
  out << "theta_sum: " << theta_text << '\n';
  const InvariantSet inv = invariants(a0, Coupling(1, 1, 1));
  out << "m12: " << g17(inv.m12) << '\n';
  out << "m13: " << g17(inv.m13) << '\n';
  out << "h: " << g17(inv.h) << '\n';
  out << "detail: " << cls.detail << '\n';
  if (cls.verdict == Verdict::NearBoundary) {
    err << "warning: initial data sits near a classification boundary\n";
    return kExitNearBoundary;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// run-ode

std::string ode_csv(const Trajectory& traj, int sample_interval, bool with_timestamp) {
  std::string csv;
  if (with_timestamp) csv += timestamp_line() + '\n';
  csv += "tau,re1,im1,re2,im2,re3,im3,r1,r2,r3,theta_sum,m12,m13,h\n";
  const std::size_t n = traj.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (i % static_cast<std::size_t>(sample_interval) != 0 && i + 1 != n) continue;
    const Triad& a = traj.states[i];
    double theta = std::numeric_limits<double>::quiet_NaN();
    try {
      theta = total_phase(a);
    } catch (const PhaseUndefinedError&) {
    }
    const InvariantSet& inv = traj.invariant_samples[i];
    csv += g17(traj.times[i]);
    for (int j = 0; j < 3; ++j)
      csv += ',' + g17(a[j].real()) + ',' + g17(a[j].imag());
    for (int j = 0; j < 3; ++j) csv += ',' + g17(std::abs(a[j]));
    csv += ',' + g17(theta) + ',' + g17(inv.m12) + ',' + g17(inv.m13) + ',' +
           g17(inv.h) + '\n';
  }
  return csv;
}

RunReport make_ode_report(const ScenarioConfig& cfg, const Triad& a0,
                          const Trajectory& traj) {
  RunReport r;
  r.scenario = {"kind: ode",
                "coupling: " + coupling_text(cfg.gamma),
                "initial: " + triple_text(a0),
                "tau_end: " + g17(cfg.tau_end) + "  tol: " + g17(cfg.tol) +
                    "  seed: " + std::to_string(cfg.seed)};
  if (cfg.preset) r.scenario.push_back("preset: " + cfg.preset->name);
  r.termination = to_string(traj.termination);
  if (std::isfinite(traj.t_star)) r.t_star = traj.t_star;

  const Classification cls = classify(a0);
  r.scenario.push_back("predicted verdict: " + std::string(to_string(cls.verdict)));

  // Conserved-combination drift. Bounded runs inherit the absolute 1e-8
  // bound. Runs that race into a singularity accumulate local error at the
  // squared-amplitude scale, so there the drift is read against that scale
  // with an allowance of ten times the total tolerance budget.
  if (traj.termination == Termination::Completed) {
    const InvariantDrift drift = invariant_drift(traj);
    r.checks.push_back(pass_fail("conserved-combination drift",
                                 drift.max_abs() <= 1e-8,
                                 "max " + g3(drift.max_abs()) + " (bound 1e-08)"));
  } else {
    double scaled = 0.0;
    const InvariantSet ref = traj.invariant_samples.front();
    for (std::size_t i = 0; i < traj.size(); ++i) {
      const double m = max_modulus(traj.states[i]);
      const double scale = std::max(1.0, m * m);
      const InvariantSet& s = traj.invariant_samples[i];
      scaled = std::max(scaled, std::abs(s.m12 - ref.m12) / scale);
      scaled = std::max(scaled, std::abs(s.m13 - ref.m13) / scale);
      scaled = std::max(scaled, std::abs(s.h - ref.h) / scale);
    }
    const double allowance =
        std::max(1e-8, 10.0 * static_cast<double>(traj.size()) * cfg.tol);
    r.checks.push_back(pass_fail(
        "conserved-combination drift", scaled <= allowance,
        "max amplitude-scaled drift " + g3(scaled) + " (allowance " +
            g3(allowance) + ")"));
  }

  // Predicted verdict versus what the integration actually did.
  if (cls.verdict == Verdict::NearBoundary)
    r.checks.push_back(skip("classifier-integrator agreement",
                            "verdict is NearBoundary; no prediction to test"));
  else
    r.checks.push_back(pass_fail("classifier-integrator agreement",
                                 classification_consistent(cls, traj),
                                 std::string("verdict ") + to_string(cls.verdict) +
                                     ", termination " + to_string(traj.termination)));

  // Monotone approach of the phase sum, proved for growth from
  // theta in (-pi/2, pi/2) with no vanishing modulus.
  {
    bool in_window = false;
    try {
      const double rem = std::remainder(total_phase(a0), kTwoPi);
      in_window = std::abs(rem) < kHalfPi - 1e-6;
    } catch (const PhaseUndefinedError&) {
    }
    const ThetaTrend trend = theta_trend(traj);
    if (cls.verdict != Verdict::BlowUpCase3 || !in_window || !trend.applicable)
      r.checks.push_back(skip("phase-sum monotone approach",
                              "holds for growth started inside (-pi/2, pi/2)"));
    else
      r.checks.push_back(pass_fail(
          "phase-sum monotone approach",
          trend.min_increment >= -1e-8 && trend.final_distance_to_half_pi <= 0.1,
          "min increment " + g3(trend.min_increment) + ", final distance to pi/2 " +
              g3(trend.final_distance_to_half_pi)));
  }

  // Autonomous growth law for the dominant modulus after a zero component.
  {
    const GrowthLawFit fit = growth_law_residual(traj, cfg.gamma);
    if (cls.verdict != Verdict::BlowUpCase1 || !fit.applicable)
      r.checks.push_back(skip("dominant-growth law",
                              "applies to growth seeded by one vanishing wave"));
    else
      r.checks.push_back(pass_fail(
          "dominant-growth law", fit.median_residual < 5e-3,
          "median relative residual " + g3(fit.median_residual) + " over " +
              std::to_string(fit.interior_samples) + " samples (bound 5e-03)"));
  }

  // Exponential floor under the decaying pair.
  if (cls.verdict != Verdict::GlobalDecay) {
    r.checks.push_back(skip("exponential decay floor", "applies to decaying runs"));
  } else {
    const double r_small = min_modulus(a0);
    const double r_big = max_modulus(a0);
    double margin = std::numeric_limits<double>::infinity();
    bool ok = true;
    for (std::size_t i = 0; i < traj.size(); ++i) {
      const double floor_v = r_small * std::exp(-r_big * traj.times[i]);
      const double have = min_modulus(traj.states[i]);
      margin = std::min(margin, have - floor_v);
      ok = ok && have >= floor_v - 1e-12;
    }
    r.checks.push_back(pass_fail("exponential decay floor", ok,
                                 "worst clearance " + g3(margin)));
  }

  // Phase sum pinned at pi/2 after a single zero crossing.
  {
    const PhaseLockReport lock = phase_lock_check(traj);
    if (!lock.applicable)
      r.checks.push_back(skip("post-crossing phase lock",
                              lock.note.empty() ? "no single zero crossing" : lock.note));
    else
      r.checks.push_back(pass_fail(
          "post-crossing phase lock", lock.locked,
          "phase deviation " + g3(lock.max_phase_deviation) + ", h deviation " +
              g3(lock.max_h_deviation) + " over " +
              std::to_string(lock.checked_samples) + " samples"));
  }
  return r;
}

int cmd_run_ode(const CommonFlags& flags, bool report_only, std::ostream& out,
                std::ostream& err) {
  auto cfg = load_config(flags.config_path, err);
  if (!cfg) return kExitUsage;
  if (cfg->kind != ScenarioKind::Ode) {
    err << "error: config describes a pde run; use run-pde\n";
    return kExitUsage;
  }
  if (!cfg->triple && !cfg->preset) {
    err << "error: config carries no initial triple\n";
    return kExitUsage;
  }
  if (flags.seed_given) cfg->seed = flags.seed;
  const Triad a0 = initial_triple(*cfg);
  const Trajectory traj = integrate(a0, cfg->gamma, cfg->tau_end, cfg->tol);

  const std::string resolved = resolve_out_path(flags.out_path);
  if (!report_only) {
    const std::string csv = ode_csv(traj, cfg->sample_interval, !flags.no_timestamp);
    if (!deliver_csv(csv, resolved, out, err)) return kExitUsage;
  }
  const RunReport report = make_ode_report(*cfg, a0, traj);
  if (report_only)
    render_report(report, out);
  else
    deliver_report(report, resolved, err);
  return traj.termination == Termination::StepSizeUnderflow ? kExitUnderflow : kExitOk;
}

// ---------------------------------------------------------------------------
// run-pde

std::string pde_csv(const FieldTrajectory& traj, bool with_timestamp) {
  std::string csv;
  if (with_timestamp) csv += timestamp_line() + '\n';
  csv += "tau,f_min,r1_min,r1_max,r2_min,r2_max,r3_min,r3_max,K1,K2,spectral_tail\n";
  for (const FieldSample& s : traj.samples) {
    csv += g17(s.tau) + ',' + g17(s.f_min);
    for (int j = 0; j < 3; ++j)
      csv += ',' + g17(s.comp_min[j]) + ',' + g17(s.comp_max[j]);
    csv += ',' + g17(s.k12) + ',' + g17(s.k13) + ',' + g17(s.tail) + '\n';
  }
  return csv;
}

RunReport make_pde_report(const ScenarioConfig& cfg, const TriadField& initial,
                          const FieldRunOptions& opt, const FieldTrajectory& traj) {
  RunReport r;
  {
    std::string grid = std::to_string(cfg.resolution[0]);
    if (cfg.dim == 2) grid += " x " + std::to_string(cfg.resolution[1]);
    std::string vel;
    for (int j = 0; j < 3; ++j) {
      if (j) vel += ' ';
      vel += '(' + g17(cfg.velocities.c[j][0]) + ", " + g17(cfg.velocities.c[j][1]) + ')';
    }
    r.scenario = {"kind: pde",
                  "coupling: " + coupling_text(cfg.gamma),
                  "grid: " + grid + "  half_width: " + g17(cfg.half_width[0]) +
                      (cfg.dim == 2 ? " " + g17(cfg.half_width[1]) : ""),
                  "velocities: " + vel,
                  "tau_end: " + g17(cfg.tau_end) + "  dt: " + g17(opt.dt) +
                      "  seed: " + std::to_string(cfg.seed)};
    if (cfg.preset) r.scenario.push_back("preset: " + cfg.preset->name);
  }
  r.termination = to_string(traj.termination);
  if (std::isfinite(traj.t_star)) r.t_star = traj.t_star;

  const auto& S = traj.samples;
  // Index of the first sample already in terminal growth; the safety
  // monitors stop being meaningful there.
  std::size_t calm = S.size();
  for (std::size_t i = 0; i < S.size(); ++i)
    if (S[i].comp_max.maxCoeff() * opt.dt >= 0.1) {
      calm = i;
      break;
    }

  // Integral invariants.
  if (traj.termination == FieldTermination::DriftAbort) {
    r.checks.push_back(pass_fail("integral-invariant drift", false,
                                 "run aborted: drift crossed the 1e-04 monitor"));
  } else if (calm == 0) {
    r.checks.push_back(skip("integral-invariant drift", "entire run in terminal growth"));
  } else {
    double rel = 0.0;
    const double k12_0 = S[0].k12, k13_0 = S[0].k13;
    for (std::size_t i = 0; i < calm; ++i) {
      const double m = S[i].comp_max.maxCoeff();
      const double scale = std::max(1.0, m * m);
      rel = std::max(rel, std::abs(S[i].k12 - k12_0) / scale);
      rel = std::max(rel, std::abs(S[i].k13 - k13_0) / scale);
    }
    r.checks.push_back(pass_fail("integral-invariant drift", rel <= 1e-6,
                                 "max amplitude-scaled drift " + g3(rel) +
                                     " before terminal growth (bound 1e-06)"));
  }

  // The pointwise guarantees hold for the resolved solution; once one step
  // moves the envelope by an order of itself the grid is past resolving the
  // collapsing peaks, so these checks read the samples before that onset.
  const char* frozen_only = "tracked for same-sign constant-phase data";
  if (!opt.track_phase_sum) {
    r.checks.push_back(skip("pointwise phase freezing", frozen_only));
    r.checks.push_back(skip("minimum-envelope monotonicity and Lipschitz bound", frozen_only));
    r.checks.push_back(skip("discrete growth inequality", frozen_only));
    r.checks.push_back(skip("strict positivity of the minimum envelope", frozen_only));
  } else if (calm < 2) {
    const char* why = "fewer than two samples before terminal growth";
    r.checks.push_back(skip("pointwise phase freezing", why));
    r.checks.push_back(skip("minimum-envelope monotonicity and Lipschitz bound", why));
    r.checks.push_back(skip("discrete growth inequality", why));
    r.checks.push_back(skip("strict positivity of the minimum envelope", why));
  } else {
    double worst_phase = 0.0;
    for (std::size_t i = 0; i < calm; ++i)
      if (std::isfinite(S[i].phase_dev))
        worst_phase = std::max(worst_phase, S[i].phase_dev);
    r.checks.push_back(pass_fail("pointwise phase freezing", worst_phase <= 1e-6,
                                 "max deviation " + g3(worst_phase) + " (bound 1e-06)"));

    double lipschitz = 0.0;
    for (std::size_t i = 0; i < calm; ++i) {
      const double m = S[i].comp_max.maxCoeff();
      lipschitz = std::max(lipschitz, m * m);
    }
    bool monotone = true, upper = true;
    double worst_drop = 0.0, worst_excess = 0.0;
    for (std::size_t i = 0; i + 1 < calm; ++i) {
      const double df = S[i + 1].f_min - S[i].f_min;
      const double dtau = S[i + 1].tau - S[i].tau;
      worst_drop = std::min(worst_drop, df);
      monotone = monotone && df >= -1e-9 * std::max(1.0, S[i].f_min);
      const double excess = df - lipschitz * dtau * (1 + 1e-6) - 1e-12;
      worst_excess = std::max(worst_excess, excess);
      upper = upper && excess <= 0.0;
    }
    r.checks.push_back(pass_fail(
        "minimum-envelope monotonicity and Lipschitz bound", monotone && upper,
        "worst decrement " + g3(worst_drop) + ", worst Lipschitz excess " +
            g3(worst_excess) + " with L = " + g3(lipschitz)));

    // (f(tau+dt) - f(tau))/dt >= f(tau)^2 - C dt, with the scheme constant C
    // measured from the run itself; its natural scale is f^3.
    {
      double c_measured = 0.0;
      double f_max = 0.0;
      for (std::size_t i = 0; i < calm; ++i) f_max = std::max(f_max, S[i].f_min);
      for (std::size_t i = 0; i + 1 < calm; ++i) {
        const double dtau = S[i + 1].tau - S[i].tau;
        if (!(dtau > 0.0)) continue;
        const double secant = (S[i + 1].f_min - S[i].f_min) / dtau;
        const double defect = S[i].f_min * S[i].f_min - secant;
        c_measured = std::max(c_measured, defect / dtau);
      }
      const double c_allow = 1.0 + 10.0 * f_max * f_max * f_max;
      r.checks.push_back(pass_fail(
          "discrete growth inequality", c_measured <= c_allow,
          "measured scheme constant " + g3(c_measured) + " (allowance " + g3(c_allow) +
              ")"));
    }

    double f_low = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < calm; ++i) f_low = std::min(f_low, S[i].f_min);
    r.checks.push_back(pass_fail("strict positivity of the minimum envelope",
                                 f_low > 0.0, "min over run " + g3(f_low)));
  }

  // Transport isometry, probed on the run's own final state.
  {
    const TriadField& f = traj.final_field;
    double rel = 0.0;
    for (int j = 0; j < 3; ++j) {
      Eigen::ArrayXXcd moved = f.comp[j];
      Eigen::Vector2d d{0.37 * f.domain.half_width[0], 0.0};
      if (f.domain.dim == 2) d[1] = 0.29 * f.domain.half_width[1];
      spectral_shift(moved, f.domain, d);
      const double before = f.comp[j].abs2().sum();
      const double after = moved.abs2().sum();
      if (before > 0.0) rel = std::max(rel, std::abs(after - before) / before);
    }
    r.checks.push_back(pass_fail("transport isometry", rel <= 1e-13,
                                 "relative energy change " + g3(rel) +
                                     " (bound 1e-13)"));
  }

  // Sup-norm bound from the sign-definite conserved combinations.
  if (!(cfg.gamma == Coupling(1, -1, -1) && cfg.velocities.all_equal())) {
    r.checks.push_back(skip("sup-norm conservation bound",
                            "needs coupling (1, -1, -1) with equal velocities"));
  } else {
    const Eigen::ArrayXXd k1_x =
        initial.comp[0].abs2() + initial.comp[1].abs2();
    const Eigen::ArrayXXd k2_x =
        initial.comp[0].abs2() + initial.comp[2].abs2();
    const double b12 = k1_x.maxCoeff();
    const double b3 = k2_x.maxCoeff();
    double excess = -std::numeric_limits<double>::infinity();
    for (const FieldSample& s : S) {
      excess = std::max(excess, s.comp_max[0] * s.comp_max[0] - b12);
      excess = std::max(excess, s.comp_max[1] * s.comp_max[1] - b12);
      excess = std::max(excess, s.comp_max[2] * s.comp_max[2] - b3);
    }
    r.checks.push_back(pass_fail("sup-norm conservation bound", excess <= 1e-6,
                                 "worst squared excess " + g3(excess) +
                                     " (bound 1e-06)"));
  }

  // Pointwise invariants carried along the shared characteristics.
  if (!opt.track_transport) {
    r.checks.push_back(skip("advected-invariant defect", "needs one shared velocity"));
  } else {
    double worst = 0.0;
    bool any = false;
    for (std::size_t i = 0; i < calm; ++i)
      if (std::isfinite(S[i].transport_defect)) {
        worst = std::max(worst, S[i].transport_defect);
        any = true;
      }
    if (!any)
      r.checks.push_back(skip("advected-invariant defect", "no tracked samples"));
    else
      r.checks.push_back(pass_fail("advected-invariant defect", worst <= 1e-6,
                                   "max pointwise defect " + g3(worst) +
                                       " (bound 1e-06)"));
  }

  // Riccati envelope floor and the singularity-time bound.
  if (!(opt.track_phase_sum && traj.termination == FieldTermination::BlowUpReached &&
        std::isfinite(traj.t_star) && calm >= 1)) {
    r.checks.push_back(skip("envelope floor and singularity bound",
                            "applies to same-sign constant-phase blow-up runs"));
  } else {
    const double f0 = S[0].f_min;
    const double tau0 = S[0].tau;
    bool floor_ok = true;
    double clearance = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < calm; ++i) {
      const FieldSample& s = S[i];
      try {
        const double floor_v = riccati_lower_bound(0.99 * f0, tau0, s.tau);
        clearance = std::min(clearance, s.f_min - floor_v);
        floor_ok = floor_ok && s.f_min >= floor_v - 1e-9;
      } catch (const PastSingularityError&) {
        floor_ok = false;
      }
    }
    const double t_bound = (1.0 / f0) * (1.0 / 0.99) + 0.05;
    const bool t_ok = traj.t_star <= t_bound;
    r.checks.push_back(pass_fail(
        "envelope floor and singularity bound", floor_ok && t_ok,
        "worst floor clearance " + g3(clearance) + "; t_star " + g3(traj.t_star) +
            " (bound " + g3(t_bound) + ")"));
  }
  return r;
}

int cmd_run_pde(const CommonFlags& flags, bool report_only, std::ostream& out,
                std::ostream& err) {
  auto cfg = load_config(flags.config_path, err);
  if (!cfg) return kExitUsage;
  if (cfg->kind != ScenarioKind::Pde) {
    err << "error: config describes an ode run; use run-ode\n";
    return kExitUsage;
  }
  if (flags.seed_given) cfg->seed = flags.seed;
  const TriadField initial = initial_field(*cfg);

  FieldRunOptions opt;
  opt.tau_end = cfg->tau_end;
  opt.dt = cfg->dt_explicit
               ? cfg->dt
               : 1e-3 / std::max(1.0, initial.max_modulus());
  opt.sample_every_steps = cfg->sample_interval;
  const double init_dev = phase_sum_deviation(initial, kHalfPi);
  opt.track_phase_sum = cfg->gamma.same_sign() && std::isfinite(init_dev) &&
                        init_dev <= kEpsPhase && grid_min_amplitude(initial) > 0.0;
  opt.track_transport = cfg->velocities.all_equal();

  const std::string resolved = resolve_out_path(flags.out_path);
  if (flags.snapshot_every > 0) {
    const std::filesystem::path dir = snapshot_directory(resolved);
    opt.snapshot_every = flags.snapshot_every;
    opt.snapshot_hook = [dir, &err](const TriadField& f, double tau, int index) {
      char name[48];
      std::snprintf(name, sizeof name, "snapshot_%06d.field", index);
      std::ofstream snap(dir / name);
      if (snap)
        write_field_snapshot(snap, f, tau);
      else
        err << "warning: cannot write snapshot " << (dir / name).string() << '\n';
    };
  }

  const FieldTrajectory traj = run_pde(initial, cfg->gamma, cfg->velocities, opt);

  if (!report_only) {
    const std::string csv = pde_csv(traj, !flags.no_timestamp);
    if (!deliver_csv(csv, resolved, out, err)) return kExitUsage;
  }
  const RunReport report = make_pde_report(*cfg, initial, opt, traj);
  if (report_only)
    render_report(report, out);
  else
    deliver_report(report, resolved, err);

  switch (traj.termination) {
    case FieldTermination::DriftAbort: return kExitDriftAbort;
    case FieldTermination::ResolutionAbort: return kExitResolutionAbort;
    case FieldTermination::Completed:
    case FieldTermination::BlowUpReached: return kExitOk;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// sweep

int cmd_sweep(const CommonFlags& flags, std::uint64_t skip_points, int jobs,
              std::ostream& out, std::ostream& err) {
  const auto cfg = load_config(flags.config_path, err);
  if (!cfg) return kExitUsage;
  if (!cfg->sweep) {
    err << "error: config has no [sweep] section\n";
    return kExitUsage;
  }
  if (cfg->gamma != Coupling(1, 1, 1)) {
    err << "error: sweeps map the same-sign classification; gamma must be (1, 1, 1)\n";
    return kExitUsage;
  }
  const SweepSpec& sw = *cfg->sweep;
  const std::size_t total = sw.points();
  if (total == 0) {
    err << "error: empty sweep grid\n";
    return kExitUsage;
  }

  const std::size_t first = std::min<std::size_t>(skip_points, total);
  std::vector<std::string> rows(total - first);
  const Coupling g(1, 1, 1);

  const auto run_point = [&](std::size_t index) {
    std::size_t rest = index;
    const double theta = sw.theta[rest % sw.theta.size()];
    rest /= sw.theta.size();
    const double r3 = sw.r3[rest % sw.r3.size()];
    rest /= sw.r3.size();
    const double r2 = sw.r2[rest % sw.r2.size()];
    rest /= sw.r2.size();
    const double r1 = sw.r1[rest];

    Triad a;
    a << std::complex<double>(r1, 0.0), std::complex<double>(r2, 0.0),
        r3 * std::polar(1.0, theta);
    const Classification cls = classify(a);
    const Trajectory traj = integrate(a, g, sw.tau_end, sw.tol);
    const bool agree = classification_consistent(cls, traj);

    std::string row = std::to_string(index);
    row += ',' + g17(r1) + ',' + g17(r2) + ',' + g17(r3) + ',' + g17(theta);
    row += ',';
    row += to_string(cls.verdict);
    row += ',';
    row += to_string(traj.termination);
    row += ',' + g17(traj.t_star) + ',' + (agree ? std::string("1") : std::string("0"));
    row += '\n';
    rows[index - first] = std::move(row);
  };

  unsigned n_threads = jobs > 0 ? static_cast<unsigned>(jobs)
                                : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min<unsigned>(n_threads, 16);
  n_threads = std::min<std::size_t>(n_threads, rows.empty() ? 1 : rows.size());

  std::atomic<std::size_t> cursor{first};
  const auto worker = [&] {
    while (true) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= total) break;
      run_point(i);
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();

  std::string csv;
  if (!flags.no_timestamp) csv += timestamp_line() + '\n';
  csv += "index,r1,r2,r3,theta,verdict,termination,t_star,agreement\n";
  for (const std::string& row : rows) csv += row;
  const std::string resolved = resolve_out_path(flags.out_path);
  if (!deliver_csv(csv, resolved, out, err)) return kExitUsage;
  return kExitOk;
}

// ---------------------------------------------------------------------------

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"numerical laboratory for resonant three-wave envelopes"};
  app.require_subcommand(1);

  auto* classify_cmd =
      app.add_subcommand("classify", "predict the fate of an initial triple");
  std::string classify_triple, classify_config;
  classify_cmd->add_option("--triple", classify_triple,
                           "initial data, e.g. \"(1,0) (0,0) (2,0)\"");
  classify_cmd->add_option("--config", classify_config, "ode scenario file");

  const auto add_common = [](CLI::App* cmd, CommonFlags& f, bool with_snapshots) {
    cmd->add_option("--config", f.config_path, "scenario file")->required();
    cmd->add_option("--seed", f.seed, "override the config seed")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--out", f.out_path,
                    "CSV destination (joined to $WAVE3_OUT_DIR when relative)");
    if (with_snapshots)
      cmd->add_option("--snapshot-every", f.snapshot_every,
                      "write a field snapshot every K samples")
          ->check(CLI::PositiveNumber);
    cmd->add_flag("--no-timestamp", f.no_timestamp,
                  "omit the generation-time header line");
  };

  CommonFlags ode_flags, pde_flags, sweep_flags, report_flags;
  auto* ode_cmd = app.add_subcommand("run-ode", "integrate a uniform triad scenario");
  add_common(ode_cmd, ode_flags, false);
  auto* pde_cmd = app.add_subcommand("run-pde", "march a periodic field scenario");
  add_common(pde_cmd, pde_flags, true);

  auto* sweep_cmd =
      app.add_subcommand("sweep", "map classifier verdicts over a parameter grid");
  std::uint64_t sweep_skip = 0;
  int sweep_jobs = 0;
  add_common(sweep_cmd, sweep_flags, false);
  sweep_cmd->add_option("--skip", sweep_skip, "resume after this many grid points");
  sweep_cmd->add_option("--jobs", sweep_jobs, "worker threads (default: hardware)");

  auto* report_cmd = app.add_subcommand(
      "report", "re-run a scenario and print only its property report");
  report_cmd->add_option("--config", report_flags.config_path, "scenario file")
      ->required();
  report_cmd->add_option("--seed", report_flags.seed, "override the config seed");

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("wave3");
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  // CLI11 sees every option it defines; remember which seeds were truly set.
  ode_flags.seed_given = ode_cmd->count("--seed") > 0;
  pde_flags.seed_given = pde_cmd->count("--seed") > 0;
  report_flags.seed_given = report_cmd->count("--seed") > 0;

  if (app.got_subcommand(classify_cmd))
    return cmd_classify(classify_triple, classify_config, out, err);
  if (app.got_subcommand(ode_cmd)) return cmd_run_ode(ode_flags, false, out, err);
  if (app.got_subcommand(pde_cmd)) return cmd_run_pde(pde_flags, false, out, err);
  if (app.got_subcommand(sweep_cmd))
    return cmd_sweep(sweep_flags, sweep_skip, sweep_jobs, out, err);
  if (app.got_subcommand(report_cmd)) {
    const auto cfg = load_config(report_flags.config_path, err);
    if (!cfg) return kExitUsage;
    return cfg->kind == ScenarioKind::Ode ? cmd_run_ode(report_flags, true, out, err)
                                          : cmd_run_pde(report_flags, true, out, err);
  }
  err << "error: no subcommand\n";
  return kExitUsage;
}

}  // namespace

void render_report(const RunReport& report, std::ostream& os) {
  os << "== run report ==\n";
  for (const std::string& line : report.scenario) os << line << '\n';
  os << "termination: " << report.termination << '\n';
  if (report.t_star) os << "t_star: " << g17(*report.t_star) << '\n';
  os << "checks:\n";
  int passed = 0, failed = 0, skipped = 0;
  for (const CheckResult& c : report.checks) {
    const char* tag = "SKIP";
    if (c.state == CheckResult::State::Pass) {
      tag = "PASS";
      ++passed;
    } else if (c.state == CheckResult::State::Fail) {
      tag = "FAIL";
      ++failed;
    } else {
      ++skipped;
    }
    os << "  [" << tag << "] " << c.name << ": " << c.detail << '\n';
  }
  os << "result: " << passed << " passed, " << failed << " failed, " << skipped
     << " skipped\n";
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace wave3
