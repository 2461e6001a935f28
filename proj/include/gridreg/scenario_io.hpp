#pragma once

#include <iosfwd>
#include <string>

#include "gridreg/model.hpp"

namespace gridreg {

/// Parses and fully validates a scenario file. Throws ConfigError with the
/// offending field on any schema or cross-reference problem.
Scenario load_scenario(const std::string& path);
Scenario parse_scenario(const std::string& json_text, const std::string& origin = "<string>");

/// Serializes back to the scenario schema. parse(serialize(s)) == s.
std::string serialize_scenario(const Scenario& s);

bool scenarios_equal(const Scenario& a, const Scenario& b);

/// One line per checked assumption.
struct AssumptionCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct DiagnosticsReport {
  std::vector<AssumptionCheck> checks;
  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

/// Checks the standing assumptions on a scenario: desired flow balance at
/// passive buses, the passive-bus stability condition D_i > sum t_ij, and
/// twice-differentiable inelastic demand signals. Always returns a report.
DiagnosticsReport validate_assumptions(const Scenario& s);

std::ostream& operator<<(std::ostream& os, const DiagnosticsReport& report);

}  // namespace gridreg
