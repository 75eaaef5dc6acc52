#pragma once

// Scenario configuration: a flat key-value text format describing runs, plus
// named generators that build initial data for each qualitative regime. The
// grammar is documented in docs/config.md; parsing reports every problem it
// finds, not just the first.

#include <array>
#include <complex>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "wave3/field.hpp"
#include "wave3/triad.hpp"

namespace wave3 {

enum class ScenarioKind { Ode, Pde };

/// One truncated-Fourier term of an explicit initial component. The second
/// index is ignored on one-dimensional domains.
struct ModeTerm {
  Eigen::Vector2i mode{0, 0};
  std::complex<double> coeff{0.0, 0.0};
};

/// Named generator plus its parameter bag. `params` holds the full set for
/// the preset, defaults already applied, so generators never guess.
struct PresetSpec {
  std::string name;
  std::map<std::string, double> params;

  double param(const std::string& key) const;
};

/// Cartesian grid over triad moduli and the total phase. Each grid point is
/// realised as the triple (r1, r2, r3*e^{i*theta}).
struct SweepSpec {
  std::vector<double> r1{1.0};
  std::vector<double> r2{1.0};
  std::vector<double> r3{1.0};
  std::vector<double> theta{0.0};
  double tau_end = 200.0;
  double tol = 1e-10;

  std::size_t points() const {
    return r1.size() * r2.size() * r3.size() * theta.size();
  }
};

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::Ode;
  Coupling gamma{1, 1, 1};
  double tau_end = 1.0;
  double tol = kDefaultTol;  // adaptive tolerance (ode runs)
  double dt = 1e-3;          // fixed step (pde runs)
  bool dt_explicit = false;  // whether the config named dt itself
  int sample_interval = 1;
  std::uint64_t seed = 0;

  // Geometry (pde runs).
  int dim = 1;
  Eigen::Vector2d half_width{kPi, kPi};
  Eigen::Vector2i resolution{256, 1};
  VelocitySet velocities;

  // Initial data: exactly one source per kind.
  std::optional<Triad> triple;                       // explicit (ode)
  std::array<std::vector<ModeTerm>, 3> modes;        // explicit (pde)
  std::optional<PresetSpec> preset;
  std::optional<SweepSpec> sweep;

  bool has_modes() const {
    return !(modes[0].empty() && modes[1].empty() && modes[2].empty());
  }
};

struct ParseIssue {
  int line = 0;  // 1-based; 0 marks a file-level problem
  int column = 0;
  std::string message;
};

struct ParseResult {
  std::optional<ScenarioConfig> config;  // engaged iff issues is empty
  std::vector<ParseIssue> issues;

  bool ok() const { return issues.empty(); }
};

/// Parse a config document. On failure `issues` lists every problem found
/// with its line and column.
ParseResult parse_config(const std::string& text);

/// Render issues one per line, sorted by position.
std::string format_issues(const std::vector<ParseIssue>& issues);

/// Parse a bare triple such as "(1,0) (0,0) (2,0)" or "[(1,0),(0,0),(2,0)]".
/// Returns nothing and fills `error` (when given) on malformed input.
std::optional<Triad> parse_triple(const std::string& text, std::string* error = nullptr);

/// Uniform doubles in [0, 1) from a fixed 64-bit generator with an explicit
/// bit mapping, so streams are identical across platforms.
class SeededUniform {
 public:
  explicit SeededUniform(std::uint64_t seed) : eng_(seed) {}
  double next() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 eng_;
};

/// Names of the built-in generators, for help text and validation.
const std::vector<std::string>& preset_names();
bool preset_is_field(const std::string& name);

/// Build the initial triple for an ODE preset. Fully determined by the
/// parameters; throws std::invalid_argument when they break the regime the
/// preset promises (for example a tied smallest modulus in ode_case2).
Triad generate_triple(const PresetSpec& preset);

/// Build the initial field for a PDE preset on the given grid. Deterministic
/// in (preset, domain, grid, seed).
TriadField generate_field(const PresetSpec& preset, const PeriodicDomain& domain,
                          int n1, int n2, std::uint64_t seed);

/// Resolve the configured initial data (explicit or preset).
Triad initial_triple(const ScenarioConfig& cfg);
TriadField initial_field(const ScenarioConfig& cfg);

}  // namespace wave3
