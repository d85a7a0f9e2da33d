#pragma once

#include <string>
#include <vector>

#include "branchforge/ast.hpp"

namespace branchforge {

// Parses a token stream into a Program. Node ids are dense 0..N-1 assigned
// pre-order. Every function body must end with a return statement at its top
// level, which keeps the control-flow graph closed on all paths.
Program parse_tokens(std::vector<Token> tokens, const std::string& text,
                     const std::string& name = "");

// Convenience: tokenize + parse. When `name` is empty, the main function's
// identifier is used as the program name.
Program parse_program(const std::string& text, const std::string& name = "");

}  // namespace branchforge
