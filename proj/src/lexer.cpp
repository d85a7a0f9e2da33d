#include <cctype>
#include <unordered_map>

#include "branchforge/errors.hpp"
#include "branchforge/token.hpp"

namespace branchforge {

const char* tok_kind_name(TokKind kind) {
  switch (kind) {
    case TokKind::Def: return "def";
    case TokKind::If: return "if";
    case TokKind::Elif: return "elif";
    case TokKind::Else: return "else";
    case TokKind::While: return "while";
    case TokKind::Return: return "return";
    case TokKind::Check: return "check";
    case TokKind::And: return "and";
    case TokKind::Or: return "or";
    case TokKind::Not: return "not";
    case TokKind::True: return "true";
    case TokKind::False: return "false";
    case TokKind::Ident: return "identifier";
    case TokKind::Int: return "integer";
    case TokKind::Plus: return "+";
    case TokKind::Minus: return "-";
    case TokKind::Star: return "*";
    case TokKind::FloorDiv: return "//";
    case TokKind::Percent: return "%";
    case TokKind::Lt: return "<";
    case TokKind::Le: return "<=";
    case TokKind::EqEq: return "==";
    case TokKind::Ne: return "!=";
    case TokKind::Assign: return "=";
    case TokKind::LParen: return "(";
    case TokKind::RParen: return ")";
    case TokKind::Comma: return ",";
    case TokKind::Colon: return ":";
    case TokKind::Newline: return "newline";
    case TokKind::Indent: return "indent";
    case TokKind::Dedent: return "dedent";
  }
  return "?";
}

namespace {

const std::unordered_map<std::string, TokKind>& keyword_table() {
  static const std::unordered_map<std::string, TokKind> table = {
      {"def", TokKind::Def},       {"if", TokKind::If},
      {"elif", TokKind::Elif},     {"else", TokKind::Else},
      {"while", TokKind::While},   {"return", TokKind::Return},
      {"check", TokKind::Check},   {"and", TokKind::And},
      {"or", TokKind::Or},         {"not", TokKind::Not},
      {"true", TokKind::True},     {"false", TokKind::False},
  };
  return table;
}

[[noreturn]] void lex_fail(int line, int col, const std::string& msg) {
  throw LexError(msg + " at line " + std::to_string(line) + ", column " +
                 std::to_string(col));
}

}  // namespace

std::vector<Token> tokenize(const std::string& text) {
  std::vector<Token> out;
  std::vector<int> indents = {0};
  size_t pos = 0;
  int line = 1;

  auto emit = [&](TokKind k, size_t start, size_t len, int col) {
    out.push_back(Token{k, text.substr(start, len), line, col, start});
  };

  while (pos < text.size()) {
    // Measure leading indentation of the line.
    size_t line_start = pos;
    int spaces = 0;
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) {
      if (text[pos] == '\t') lex_fail(line, spaces + 1, "tab in indentation");
      ++spaces;
      ++pos;
    }
    if (pos >= text.size()) break;
    if (text[pos] == '\n') {  // blank line: no tokens
      ++pos;
      ++line;
      continue;
    }
    if (spaces > indents.back()) {
      indents.push_back(spaces);
      emit(TokKind::Indent, line_start, static_cast<size_t>(spaces), 1);
    } else {
      while (spaces < indents.back()) {
        indents.pop_back();
        emit(TokKind::Dedent, line_start, 0, 1);
      }
      if (spaces != indents.back())
        lex_fail(line, 1, "inconsistent dedent");
    }

    // Tokens within the line.
    while (pos < text.size() && text[pos] != '\n') {
      char c = text[pos];
      int col = static_cast<int>(pos - line_start) + 1;
      if (c == ' ') {
        ++pos;
        continue;
      }
      if (c == '\t') lex_fail(line, col, "tab character");
      size_t start = pos;
      if (std::islower(static_cast<unsigned char>(c)) || c == '_') {
        while (pos < text.size() &&
               (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_'))
          ++pos;
        std::string word = text.substr(start, pos - start);
        auto it = keyword_table().find(word);
        emit(it != keyword_table().end() ? it->second : TokKind::Ident, start,
             pos - start, col);
        continue;
      }
      if (std::isdigit(static_cast<unsigned char>(c))) {
        while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos])))
          ++pos;
        emit(TokKind::Int, start, pos - start, col);
        continue;
      }
      auto two = [&](char a, char b) {
        return text[pos] == a && pos + 1 < text.size() && text[pos + 1] == b;
      };
      if (two('/', '/')) { emit(TokKind::FloorDiv, start, 2, col); pos += 2; continue; }
      if (two('<', '=')) { emit(TokKind::Le, start, 2, col); pos += 2; continue; }
      if (two('=', '=')) { emit(TokKind::EqEq, start, 2, col); pos += 2; continue; }
      if (two('!', '=')) { emit(TokKind::Ne, start, 2, col); pos += 2; continue; }
      TokKind k;
      switch (c) {
        case '+': k = TokKind::Plus; break;
        case '-': k = TokKind::Minus; break;
        case '*': k = TokKind::Star; break;
        case '%': k = TokKind::Percent; break;
        case '<': k = TokKind::Lt; break;
        case '=': k = TokKind::Assign; break;
        case '(': k = TokKind::LParen; break;
        case ')': k = TokKind::RParen; break;
        case ',': k = TokKind::Comma; break;
        case ':': k = TokKind::Colon; break;
        default:
          lex_fail(line, col, std::string("illegal character '") + c + "'");
      }
      emit(k, start, 1, col);
      ++pos;
    }
    if (pos < text.size() && text[pos] == '\n') {
      emit(TokKind::Newline, pos, 1, static_cast<int>(pos - line_start) + 1);
      ++pos;
      ++line;
    }
  }

  // Unwind open indents at end of input.
  while (indents.size() > 1) {
    indents.pop_back();
    out.push_back(Token{TokKind::Dedent, "", line, 1, text.size()});
  }
  return out;
}

}  // namespace branchforge
