#pragma once

#include <string>
#include <vector>

namespace branchforge {

// Runtime value of MiniLang: integers and booleans, kept strictly apart.
struct Value {
  enum class Type { Int, Bool };
  Type type = Type::Int;
  long long i = 0;

  static Value of_int(long long v) { return Value{Type::Int, v}; }
  static Value of_bool(bool v) { return Value{Type::Bool, v ? 1 : 0}; }
  bool is_int() const { return type == Type::Int; }
  bool is_bool() const { return type == Type::Bool; }
  bool as_bool() const { return i != 0; }
  std::string to_string() const;
};

bool operator==(const Value& a, const Value& b);
inline bool operator!=(const Value& a, const Value& b) { return !(a == b); }

// One test: a call plus an equality assertion, e.g. `check f(2, true) == 5`.
struct TestCase {
  std::string call_target;
  std::vector<Value> args;
  Value expected;
  std::string source_text;  // canonical rendering

  std::string render() const;
};

bool operator==(const TestCase& a, const TestCase& b);

// Parses a single `check` line. The returned TestCase carries the canonical
// rendering in source_text, which re-parses to an equal TestCase.
TestCase parse_test(const std::string& text);

}  // namespace branchforge
