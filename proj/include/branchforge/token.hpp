#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace branchforge {

enum class TokKind {
  Def, If, Elif, Else, While, Return, Check, And, Or, Not, True, False,
  Ident, Int,
  Plus, Minus, Star, FloorDiv, Percent,
  Lt, Le, EqEq, Ne, Assign,
  LParen, RParen, Comma, Colon,
  Newline, Indent, Dedent,
};

struct Token {
  TokKind kind;
  std::string lexeme;
  int line = 1;       // 1-based
  int col = 1;        // 1-based
  size_t offset = 0;  // byte offset into the source text
};

const char* tok_kind_name(TokKind kind);

// Lexes MiniLang source. Emits Indent/Dedent tokens from leading spaces
// (any consistent width), Newline for each '\n' on a non-blank line, and no
// end-of-input sentinel: empty input yields an empty list.
std::vector<Token> tokenize(const std::string& text);

}  // namespace branchforge
