#pragma once

#include <cstdint>
#include <vector>

#include "branchforge/cpg.hpp"
#include "branchforge/interp.hpp"

namespace branchforge {

// One execution branch: the ordered statement path, its line set, and a
// stable 64-bit identity hashed from the path. Two runs that execute the
// same statements in the same order share a branch_id.
struct Branch {
  std::vector<int> path;       // statement node ids, in execution order
  std::vector<int> line_path;  // line_start of each path node, same order
  std::vector<int> line_set;   // sorted, deduplicated line_path
  uint64_t branch_id = 0;
};

struct BranchSet {
  std::vector<Branch> branches;
  int total = 0;
};

uint64_t branch_id_of_path(const std::vector<int>& path);
std::vector<int> line_set_of_path(const Cpg& cpg, const std::vector<int>& path);

// Converts an execution trace into its branch. Throws EmptyTrace when the
// trace has no events.
Branch trace_to_branch(const ExecutionTrace& trace);

// Depth-first enumeration of control-flow paths from the entry to any
// return, following out-edges in construction order (taken arm before
// fall-through, loop body before exit). Each while node's body is entered at
// most loop_bound times per path; at most `cap` branches are returned.
// Enumeration covers the main function only; statically feasible but
// dynamically unreachable paths may be included.
BranchSet enumerate_branches(const Cpg& cpg, int loop_bound = 2, int cap = 1000);

}  // namespace branchforge
