#include "branchforge/interp.hpp"

#include <sstream>
#include <unordered_map>

namespace branchforge {

const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::Passed: return "passed";
    case Outcome::AssertionFailed: return "assertion_failed";
    case Outcome::RuntimeError: return "runtime_error";
    case Outcome::StepLimitExceeded: return "step_limit_exceeded";
  }
  return "?";
}

namespace {

constexpr int kMaxCallDepth = 64;

struct Fault {
  std::string msg;
};

struct StepLimitHit {};

class Interp {
 public:
  Interp(const Program& p, int step_limit) : p_(p), step_limit_(step_limit) {}

  std::vector<TraceEvent> events;

  Value call(const std::string& target, const std::vector<Value>& args, int depth) {
    if (depth > kMaxCallDepth) throw Fault{"call depth limit exceeded"};
    int fid = p_.find_function(target);
    if (fid < 0) throw Fault{"unknown function '" + target + "'"};
    std::vector<std::string> params = p_.param_names(fid);
    if (params.size() != args.size())
      throw Fault{"arity mismatch calling '" + target + "': expected " +
                  std::to_string(params.size()) + ", got " +
                  std::to_string(args.size())};
    std::unordered_map<std::string, Value> env;
    for (size_t i = 0; i < params.size(); ++i) env[params[i]] = args[i];
    std::optional<Value> ret = exec_block(p_.body_block(fid), env, depth);
    if (!ret) throw Fault{"function '" + target + "' ended without returning"};
    return *ret;
  }

 private:
  const Program& p_;
  int step_limit_;

  const AstNode& node(int id) const { return p_.node(id); }

  void step(int id) {
    if (static_cast<int>(events.size()) >= step_limit_) throw StepLimitHit{};
    events.push_back(TraceEvent{id, node(id).line_start});
  }

  std::optional<Value> exec_block(int block_id,
                                  std::unordered_map<std::string, Value>& env,
                                  int depth) {
    for (int sid : node(block_id).children) {
      std::optional<Value> ret = exec_stmt(sid, env, depth);
      if (ret) return ret;
    }
    return std::nullopt;
  }

  std::optional<Value> exec_stmt(int sid,
                                 std::unordered_map<std::string, Value>& env,
                                 int depth) {
    const AstNode& s = node(sid);
    switch (s.kind) {
      case NodeKind::Assign: {
        step(sid);
        env[s.name] = eval(s.children[0], env, depth);
        return std::nullopt;
      }
      case NodeKind::Call: {
        step(sid);
        eval(sid, env, depth);  // value discarded
        return std::nullopt;
      }
      case NodeKind::Return: {
        step(sid);
        return eval(s.children[0], env, depth);
      }
      case NodeKind::While: {
        while (true) {
          step(sid);
          if (!truth(eval(s.children[0], env, depth))) return std::nullopt;
          std::optional<Value> ret = exec_block(s.children[1], env, depth);
          if (ret) return ret;
        }
      }
      case NodeKind::If: {
        step(sid);
        if (truth(eval(s.children[0], env, depth)))
          return exec_block(s.children[1], env, depth);
        for (size_t a = 2; a < s.children.size(); ++a) {
          const AstNode& arm = node(s.children[a]);
          if (arm.kind == NodeKind::Elif) {
            step(s.children[a]);
            if (truth(eval(arm.children[0], env, depth)))
              return exec_block(arm.children[1], env, depth);
          } else {
            return exec_block(arm.children[0], env, depth);
          }
        }
        return std::nullopt;
      }
      default:
        throw Fault{std::string("cannot execute node kind ") + kind_name(s.kind)};
    }
  }

  bool truth(const Value& v) {
    if (!v.is_bool()) throw Fault{"condition must be boolean"};
    return v.as_bool();
  }

  long long want_int(const Value& v, const char* op) {
    if (!v.is_int()) throw Fault{std::string("operator ") + op + " needs integers"};
    return v.i;
  }

  bool want_bool(const Value& v, const char* op) {
    if (!v.is_bool()) throw Fault{std::string("operator ") + op + " needs booleans"};
    return v.as_bool();
  }

  Value eval(int eid, std::unordered_map<std::string, Value>& env, int depth) {
    const AstNode& e = node(eid);
    switch (e.kind) {
      case NodeKind::IntLit:
        return Value::of_int(e.int_value);
      case NodeKind::BoolLit:
        return Value::of_bool(e.bool_value);
      case NodeKind::Var: {
        auto it = env.find(e.name);
        if (it == env.end()) throw Fault{"unbound variable '" + e.name + "'"};
        return it->second;
      }
      case NodeKind::Call: {
        std::vector<Value> args;
        args.reserve(e.children.size());
        for (int c : e.children) args.push_back(eval(c, env, depth));
        return call(e.name, args, depth + 1);
      }
      case NodeKind::UnaryOp: {
        if (e.name == "-")
          return Value::of_int(-want_int(eval(e.children[0], env, depth), "-"));
        return Value::of_bool(!want_bool(eval(e.children[0], env, depth), "not"));
      }
      case NodeKind::BinOp:
        return eval_binop(e, env, depth);
      default:
        throw Fault{std::string("cannot evaluate node kind ") + kind_name(e.kind)};
    }
  }

  Value eval_binop(const AstNode& e, std::unordered_map<std::string, Value>& env,
                   int depth) {
    const std::string& op = e.name;
    // Short-circuit logical operators.
    if (op == "and") {
      if (!want_bool(eval(e.children[0], env, depth), "and"))
        return Value::of_bool(false);
      return Value::of_bool(want_bool(eval(e.children[1], env, depth), "and"));
    }
    if (op == "or") {
      if (want_bool(eval(e.children[0], env, depth), "or"))
        return Value::of_bool(true);
      return Value::of_bool(want_bool(eval(e.children[1], env, depth), "or"));
    }
    Value lhs = eval(e.children[0], env, depth);
    Value rhs = eval(e.children[1], env, depth);
    if (op == "==") return Value::of_bool(lhs == rhs);
    if (op == "!=") return Value::of_bool(!(lhs == rhs));
    long long a = want_int(lhs, op.c_str());
    long long b = want_int(rhs, op.c_str());
    if (op == "+") return Value::of_int(a + b);
    if (op == "-") return Value::of_int(a - b);
    if (op == "*") return Value::of_int(a * b);
    if (op == "<") return Value::of_bool(a < b);
    if (op == "<=") return Value::of_bool(a <= b);
    if (b == 0) throw Fault{op == "//" ? "division by zero" : "modulo by zero"};
    // Floor semantics, matching the expected behavior for negatives.
    long long q = a / b;
    long long r = a % b;
    if (r != 0 && ((a < 0) != (b < 0))) { --q; r += b; }
    if (op == "//") return Value::of_int(q);
    return Value::of_int(r);
  }
};

ExecutionTrace run_impl(const Program& program, const std::string& target,
                        const std::vector<Value>& args,
                        const std::optional<Value>& expected, int step_limit) {
  Interp interp(program, step_limit);
  ExecutionTrace trace;
  try {
    Value result = interp.call(target, args, 0);
    trace.events = std::move(interp.events);
    trace.returned = result;
    if (!expected) {
      trace.outcome = Outcome::Passed;
    } else {
      trace.outcome = (result == *expected) ? Outcome::Passed
                                            : Outcome::AssertionFailed;
    }
  } catch (const Fault& f) {
    trace.events = std::move(interp.events);
    trace.outcome = Outcome::RuntimeError;
    trace.note = f.msg;
  } catch (const StepLimitHit&) {
    trace.events = std::move(interp.events);
    trace.outcome = Outcome::StepLimitExceeded;
    trace.note = "step limit " + std::to_string(step_limit) + " exceeded";
  }
  return trace;
}

}  // namespace

ExecutionTrace execute(const Program& program, const TestCase& test,
                       int step_limit) {
  return run_impl(program, test.call_target, test.args, test.expected, step_limit);
}

ExecutionTrace run_function(const Program& program, const std::string& target,
                            const std::vector<Value>& args, int step_limit) {
  return run_impl(program, target, args, std::nullopt, step_limit);
}

std::string trace_to_text(const ExecutionTrace& trace) {
  std::ostringstream out;
  for (const TraceEvent& e : trace.events)
    out << e.node_id << ':' << e.line << '\n';
  out << "outcome: " << outcome_name(trace.outcome);
  if (trace.returned) out << " returned=" << trace.returned->to_string();
  if (!trace.note.empty()) out << " note=" << trace.note;
  out << '\n';
  return out.str();
}

}  // namespace branchforge
