#include "branchforge/testcase.hpp"

#include "branchforge/errors.hpp"
#include "branchforge/token.hpp"

namespace branchforge {

std::string Value::to_string() const {
  if (type == Type::Bool) return i ? "true" : "false";
  return std::to_string(i);
}

bool operator==(const Value& a, const Value& b) {
  return a.type == b.type && a.i == b.i;
}

std::string TestCase::render() const {
  std::string out = "check " + call_target + "(";
  for (size_t i = 0; i < args.size(); ++i) {
    if (i) out += ", ";
    out += args[i].to_string();
  }
  out += ") == " + expected.to_string();
  return out;
}

bool operator==(const TestCase& a, const TestCase& b) {
  return a.call_target == b.call_target && a.args == b.args &&
         a.expected == b.expected;
}

TestCase parse_test(const std::string& text) {
  std::vector<Token> toks;
  try {
    toks = tokenize(text);
  } catch (const LexError& e) {
    throw ParseError(e.what());
  }
  size_t pos = 0;
  auto at_end = [&] {
    return pos >= toks.size() || toks[pos].kind == TokKind::Newline;
  };
  auto expect = [&](TokKind k, const char* what) -> const Token& {
    if (at_end() || toks[pos].kind != k)
      throw ParseError(std::string("expected ") + what + " in check line");
    return toks[pos++];
  };
  auto literal = [&]() -> Value {
    bool neg = false;
    if (!at_end() && toks[pos].kind == TokKind::Minus) { neg = true; ++pos; }
    if (at_end()) throw ParseError("expected literal in check line");
    const Token& t = toks[pos];
    if (t.kind == TokKind::Int) {
      ++pos;
      long long v = std::stoll(t.lexeme);
      return Value::of_int(neg ? -v : v);
    }
    if (!neg && t.kind == TokKind::True) { ++pos; return Value::of_bool(true); }
    if (!neg && t.kind == TokKind::False) { ++pos; return Value::of_bool(false); }
    throw ParseError("expected integer or boolean literal in check line");
  };

  TestCase tc;
  expect(TokKind::Check, "'check'");
  tc.call_target = expect(TokKind::Ident, "function name").lexeme;
  expect(TokKind::LParen, "'('");
  if (!at_end() && toks[pos].kind != TokKind::RParen) {
    while (true) {
      tc.args.push_back(literal());
      if (!at_end() && toks[pos].kind == TokKind::Comma) { ++pos; continue; }
      break;
    }
  }
  expect(TokKind::RParen, "')'");
  expect(TokKind::EqEq, "'=='");
  tc.expected = literal();
  if (pos < toks.size() && toks[pos].kind == TokKind::Newline) ++pos;
  if (pos != toks.size())
    throw ParseError("unexpected trailing tokens in check line");
  tc.source_text = tc.render();
  return tc;
}

}  // namespace branchforge
