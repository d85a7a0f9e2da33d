#pragma once

#include <string>
#include <vector>

namespace branchforge {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// The three selfcheck suites: finite-difference gradient checks over every
// numerics primitive, parser/printer round-trip properties over generated
// programs, and metric equivalence against an independent recount. Each
// returns pass/fail plus a short detail line.
SuiteResult selfcheck_gradients();
SuiteResult selfcheck_roundtrip();
SuiteResult selfcheck_metrics();

std::vector<SuiteResult> run_selfcheck();

}  // namespace branchforge
