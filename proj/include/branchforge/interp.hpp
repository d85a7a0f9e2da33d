#pragma once

#include <optional>
#include <string>
#include <vector>

#include "branchforge/ast.hpp"
#include "branchforge/testcase.hpp"

namespace branchforge {

enum class Outcome { Passed, AssertionFailed, RuntimeError, StepLimitExceeded };
const char* outcome_name(Outcome o);

struct TraceEvent {
  int node_id = 0;
  int line = 0;
};

struct ExecutionTrace {
  std::vector<TraceEvent> events;
  Outcome outcome = Outcome::RuntimeError;
  std::optional<Value> returned;
  std::string note;  // fault detail for RuntimeError
};

inline constexpr int kDefaultStepLimit = 10000;

// Deterministic tree-walking run of `test` against `program`. Every executed
// statement (including helper-function statements) appends one event, in
// order. Division by zero, unbound variables, type faults and missing
// functions end the run with a RuntimeError outcome, keeping the trace up to
// the fault. Exceeding step_limit yields StepLimitExceeded.
ExecutionTrace execute(const Program& program, const TestCase& test,
                       int step_limit = kDefaultStepLimit);

// Like execute but without an assertion: calls `target` with `args` and
// reports the returned value. Used by test synthesis, where the expected
// value is whatever the run produced.
ExecutionTrace run_function(const Program& program, const std::string& target,
                            const std::vector<Value>& args,
                            int step_limit = kDefaultStepLimit);

// Debug dump: one `node_id:line` record per event plus a final `outcome:`.
std::string trace_to_text(const ExecutionTrace& trace);

}  // namespace branchforge
