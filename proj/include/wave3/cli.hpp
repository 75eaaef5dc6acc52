#pragma once

// Command-line front end. Everything routes through run_cli so tests can
// drive the full command surface against in-memory streams.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace wave3 {

struct CheckResult {
  enum class State { Pass, Fail, Skip };
  std::string name;
  State state = State::Skip;
  std::string detail;  // measured margin, or the reason the check was skipped
};

struct RunReport {
  std::vector<std::string> scenario;  // echo of what was run
  std::string termination;
  std::optional<double> t_star;
  std::vector<CheckResult> checks;

  bool all_passed() const {
    for (const CheckResult& c : checks)
      if (c.state == CheckResult::State::Fail) return false;
    return true;
  }
};

void render_report(const RunReport& report, std::ostream& os);

/// Dispatch one invocation. `args` excludes the program name. Exit codes:
/// 0 success (a detected blow-up is a result, not a failure), 1 usage or
/// config error, 2 classification landed near a case boundary, 3 invariant
/// drift abort, 4 spectral resolution abort, 5 step-size underflow.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wave3
