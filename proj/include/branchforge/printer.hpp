#pragma once

#include <string>

#include "branchforge/ast.hpp"

namespace branchforge {

// Canonical source renderer: two-space indents, spaces around binary
// operators, minimal parentheses. parse(pretty_print(p)) is structurally
// equal to p. Printing a non-root fragment is allowed and yields a fragment.
std::string pretty_print(const Program& program);
std::string pretty_print(const Program& program, int node_id, int indent = 0);

std::string print_expr(const Program& program, int node_id);

}  // namespace branchforge
