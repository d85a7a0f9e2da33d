#include "branchforge/parser.hpp"

#include <memory>

#include "branchforge/errors.hpp"

namespace branchforge {

NodeKind kind_from_code(int code) {
  if (code < 0 || code >= kNodeKindCount)
    throw ConfigError("bad node kind code " + std::to_string(code));
  return static_cast<NodeKind>(code);
}

const char* kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::Assign: return "Assign";
    case NodeKind::If: return "If";
    case NodeKind::Elif: return "Elif";
    case NodeKind::Else: return "Else";
    case NodeKind::While: return "While";
    case NodeKind::Return: return "Return";
    case NodeKind::Call: return "Call";
    case NodeKind::BinOp: return "BinOp";
    case NodeKind::UnaryOp: return "UnaryOp";
    case NodeKind::Var: return "Var";
    case NodeKind::IntLit: return "IntLit";
    case NodeKind::BoolLit: return "BoolLit";
    case NodeKind::FuncDef: return "FuncDef";
    case NodeKind::Param: return "Param";
    case NodeKind::Block: return "Block";
    case NodeKind::CheckStmt: return "CheckStmt";
  }
  return "?";
}

namespace {

struct PNode {
  NodeKind kind;
  std::vector<std::unique_ptr<PNode>> kids;
  int line_start = 0, line_end = 0;
  int tok_begin = 0, tok_end = 0;
  std::string name;
  long long int_value = 0;
  bool bool_value = false;
};

using PNodePtr = std::unique_ptr<PNode>;

class Parser {
 public:
  Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  std::vector<PNodePtr> parse_functions() {
    std::vector<PNodePtr> funcs;
    while (!at_end()) funcs.push_back(parse_funcdef());
    if (funcs.empty()) fail("expected 'def'");
    return funcs;
  }

 private:
  std::vector<Token> toks_;
  size_t pos_ = 0;

  bool at_end() const { return pos_ >= toks_.size(); }
  const Token& peek() const { return toks_[pos_]; }
  bool check(TokKind k) const { return !at_end() && peek().kind == k; }
  bool check2(TokKind k) const {
    return pos_ + 1 < toks_.size() && toks_[pos_ + 1].kind == k;
  }
  const Token& advance() { return toks_[pos_++]; }

  [[noreturn]] void fail(const std::string& expected) {
    if (at_end()) {
      int line = toks_.empty() ? 1 : toks_.back().line;
      throw ParseError("expected " + expected + ", got end of input at line " +
                       std::to_string(line));
    }
    const Token& t = peek();
    throw ParseError("expected " + expected + ", got '" +
                     (t.lexeme.empty() ? tok_kind_name(t.kind) : t.lexeme) +
                     "' at line " + std::to_string(t.line) + ", column " +
                     std::to_string(t.col));
  }

  const Token& expect(TokKind k, const std::string& what) {
    if (!check(k)) fail(what);
    return advance();
  }

  void expect_stmt_end() {
    // A statement ends at a newline or at the end of the stream.
    if (check(TokKind::Newline)) { advance(); return; }
    if (at_end() || check(TokKind::Dedent)) return;
    fail("end of statement");
  }

  PNodePtr make(NodeKind kind, int tok_begin) {
    auto n = std::make_unique<PNode>();
    n->kind = kind;
    n->tok_begin = tok_begin;
    n->line_start = toks_[static_cast<size_t>(tok_begin)].line;
    return n;
  }

  void close(PNode& n, int tok_end_exclusive) {
    n.tok_end = tok_end_exclusive;
    n.line_end = n.line_start;
    // Trailing Dedent tokens sit on the line after the construct; skip them.
    for (int i = tok_end_exclusive - 1; i >= n.tok_begin; --i) {
      if (toks_[static_cast<size_t>(i)].kind == TokKind::Dedent) continue;
      n.line_end = toks_[static_cast<size_t>(i)].line;
      break;
    }
    for (const auto& k : n.kids) {
      if (k->line_start < n.line_start) n.line_start = k->line_start;
      if (k->line_end > n.line_end) n.line_end = k->line_end;
    }
  }

  int cur() const { return static_cast<int>(pos_); }

  PNodePtr parse_funcdef() {
    int begin = cur();
    expect(TokKind::Def, "'def'");
    auto fn = make(NodeKind::FuncDef, begin);
    fn->name = expect(TokKind::Ident, "function name").lexeme;
    expect(TokKind::LParen, "'('");
    if (!check(TokKind::RParen)) {
      while (true) {
        int pbegin = cur();
        auto p = make(NodeKind::Param, pbegin);
        p->name = expect(TokKind::Ident, "parameter name").lexeme;
        close(*p, cur());
        fn->kids.push_back(std::move(p));
        if (check(TokKind::Comma)) { advance(); continue; }
        break;
      }
    }
    expect(TokKind::RParen, "')'");
    expect(TokKind::Colon, "':'");
    expect(TokKind::Newline, "newline after ':'");
    fn->kids.push_back(parse_block());
    const PNode& body = *fn->kids.back();
    if (body.kids.empty() || body.kids.back()->kind != NodeKind::Return)
      throw ParseError("function '" + fn->name +
                       "' must end with a return statement (line " +
                       std::to_string(body.line_end) + ")");
    close(*fn, cur());
    return fn;
  }

  PNodePtr parse_block() {
    int begin = cur();
    expect(TokKind::Indent, "indented block");
    auto block = make(NodeKind::Block, begin);
    while (!check(TokKind::Dedent)) {
      if (at_end()) fail("statement or dedent");
      block->kids.push_back(parse_statement());
    }
    advance();  // Dedent
    close(*block, cur());
    return block;
  }

  PNodePtr parse_statement() {
    if (check(TokKind::If)) return parse_if();
    if (check(TokKind::While)) return parse_while();
    if (check(TokKind::Return)) return parse_return();
    if (check(TokKind::Ident)) {
      if (check2(TokKind::Assign)) return parse_assign();
      if (check2(TokKind::LParen)) {
        int begin = cur();
        auto call = parse_call();
        expect_stmt_end();
        close(*call, cur());
        call->tok_begin = begin;
        return call;
      }
      fail("'=' or '(' after identifier");
    }
    fail("statement");
  }

  PNodePtr parse_assign() {
    int begin = cur();
    auto n = make(NodeKind::Assign, begin);
    n->name = advance().lexeme;  // target identifier
    expect(TokKind::Assign, "'='");
    n->kids.push_back(parse_expr());
    expect_stmt_end();
    close(*n, cur());
    return n;
  }

  PNodePtr parse_return() {
    int begin = cur();
    auto n = make(NodeKind::Return, begin);
    advance();
    n->kids.push_back(parse_expr());
    expect_stmt_end();
    close(*n, cur());
    return n;
  }

  PNodePtr parse_if() {
    int begin = cur();
    auto n = make(NodeKind::If, begin);
    advance();
    n->kids.push_back(parse_expr());
    expect(TokKind::Colon, "':'");
    expect(TokKind::Newline, "newline after ':'");
    n->kids.push_back(parse_block());
    while (check(TokKind::Elif)) {
      int ebegin = cur();
      auto arm = make(NodeKind::Elif, ebegin);
      advance();
      arm->kids.push_back(parse_expr());
      expect(TokKind::Colon, "':'");
      expect(TokKind::Newline, "newline after ':'");
      arm->kids.push_back(parse_block());
      close(*arm, cur());
      n->kids.push_back(std::move(arm));
    }
    if (check(TokKind::Else)) {
      int ebegin = cur();
      auto arm = make(NodeKind::Else, ebegin);
      advance();
      expect(TokKind::Colon, "':'");
      expect(TokKind::Newline, "newline after ':'");
      arm->kids.push_back(parse_block());
      close(*arm, cur());
      n->kids.push_back(std::move(arm));
    }
    close(*n, cur());
    return n;
  }

  PNodePtr parse_while() {
    int begin = cur();
    auto n = make(NodeKind::While, begin);
    advance();
    n->kids.push_back(parse_expr());
    expect(TokKind::Colon, "':'");
    expect(TokKind::Newline, "newline after ':'");
    n->kids.push_back(parse_block());
    close(*n, cur());
    return n;
  }

  // Expression grammar, loosest first:
  //   or < and < not < comparison (non-chaining) < additive < multiplicative
  //   < unary minus < atom
  PNodePtr parse_expr() { return parse_or(); }

  PNodePtr binop(PNodePtr lhs, const std::string& op, PNodePtr rhs, int begin) {
    auto n = make(NodeKind::BinOp, begin);
    n->name = op;
    n->kids.push_back(std::move(lhs));
    n->kids.push_back(std::move(rhs));
    close(*n, cur());
    return n;
  }

  PNodePtr parse_or() {
    int begin = cur();
    auto lhs = parse_and();
    while (check(TokKind::Or)) {
      advance();
      lhs = binop(std::move(lhs), "or", parse_and(), begin);
    }
    return lhs;
  }

  PNodePtr parse_and() {
    int begin = cur();
    auto lhs = parse_not();
    while (check(TokKind::And)) {
      advance();
      lhs = binop(std::move(lhs), "and", parse_not(), begin);
    }
    return lhs;
  }

  PNodePtr parse_not() {
    if (check(TokKind::Not)) {
      int begin = cur();
      auto n = make(NodeKind::UnaryOp, begin);
      n->name = "not";
      advance();
      n->kids.push_back(parse_not());
      close(*n, cur());
      return n;
    }
    return parse_comparison();
  }

  PNodePtr parse_comparison() {
    int begin = cur();
    auto lhs = parse_additive();
    auto cmp_op = [&]() -> const char* {
      if (check(TokKind::Lt)) return "<";
      if (check(TokKind::Le)) return "<=";
      if (check(TokKind::EqEq)) return "==";
      if (check(TokKind::Ne)) return "!=";
      return nullptr;
    };
    if (const char* op = cmp_op()) {
      advance();
      lhs = binop(std::move(lhs), op, parse_additive(), begin);
      if (cmp_op()) fail("single comparison (chaining is not supported)");
    }
    return lhs;
  }

  PNodePtr parse_additive() {
    int begin = cur();
    auto lhs = parse_multiplicative();
    while (check(TokKind::Plus) || check(TokKind::Minus)) {
      std::string op = advance().lexeme;
      lhs = binop(std::move(lhs), op, parse_multiplicative(), begin);
    }
    return lhs;
  }

  PNodePtr parse_multiplicative() {
    int begin = cur();
    auto lhs = parse_unary();
    while (check(TokKind::Star) || check(TokKind::FloorDiv) || check(TokKind::Percent)) {
      std::string op = advance().lexeme;
      lhs = binop(std::move(lhs), op, parse_unary(), begin);
    }
    return lhs;
  }

  PNodePtr parse_unary() {
    if (check(TokKind::Minus)) {
      int begin = cur();
      auto n = make(NodeKind::UnaryOp, begin);
      n->name = "-";
      advance();
      n->kids.push_back(parse_unary());
      close(*n, cur());
      return n;
    }
    return parse_atom();
  }

  PNodePtr parse_call() {
    int begin = cur();
    auto n = make(NodeKind::Call, begin);
    n->name = advance().lexeme;
    expect(TokKind::LParen, "'('");
    if (!check(TokKind::RParen)) {
      while (true) {
        n->kids.push_back(parse_expr());
        if (check(TokKind::Comma)) { advance(); continue; }
        break;
      }
    }
    expect(TokKind::RParen, "')'");
    close(*n, cur());
    return n;
  }

  PNodePtr parse_atom() {
    if (check(TokKind::Int)) {
      int begin = cur();
      auto n = make(NodeKind::IntLit, begin);
      n->int_value = std::stoll(advance().lexeme);
      close(*n, cur());
      return n;
    }
    if (check(TokKind::True) || check(TokKind::False)) {
      int begin = cur();
      auto n = make(NodeKind::BoolLit, begin);
      n->bool_value = advance().kind == TokKind::True;
      close(*n, cur());
      return n;
    }
    if (check(TokKind::Ident)) {
      if (check2(TokKind::LParen)) return parse_call();
      int begin = cur();
      auto n = make(NodeKind::Var, begin);
      n->name = advance().lexeme;
      close(*n, cur());
      return n;
    }
    if (check(TokKind::LParen)) {
      advance();
      auto inner = parse_expr();
      expect(TokKind::RParen, "')'");
      return inner;
    }
    fail("expression");
  }
};

void flatten(const PNode& n, int parent, int order, int depth, Program& out) {
  int id = static_cast<int>(out.nodes.size());
  out.nodes.emplace_back();
  AstNode& dst = out.nodes.back();
  dst.id = id;
  dst.kind = n.kind;
  dst.parent = parent;
  dst.order = order;
  dst.depth = depth;
  dst.line_start = n.line_start;
  dst.line_end = n.line_end;
  dst.tok_begin = n.tok_begin;
  dst.tok_end = n.tok_end;
  dst.name = n.name;
  dst.int_value = n.int_value;
  dst.bool_value = n.bool_value;
  for (size_t i = 0; i < n.kids.size(); ++i) {
    int child_id = static_cast<int>(out.nodes.size());
    out.nodes[static_cast<size_t>(id)].children.push_back(child_id);
    flatten(*n.kids[i], id, static_cast<int>(i), depth + 1, out);
  }
}

}  // namespace

Program parse_tokens(std::vector<Token> tokens, const std::string& text,
                     const std::string& name) {
  Parser parser(std::move(tokens));
  std::vector<PNodePtr> funcs = parser.parse_functions();

  // Helpers hang off the main function's node so the AST stays one tree.
  PNodePtr main_fn = std::move(funcs.front());
  for (size_t i = 1; i < funcs.size(); ++i) {
    if (funcs[i]->line_end > main_fn->line_end)
      main_fn->line_end = funcs[i]->line_end;
    main_fn->kids.push_back(std::move(funcs[i]));
  }

  Program program;
  program.source.text = text;
  program.source.name = name.empty() ? main_fn->name : name;
  int lines = 1;
  for (char c : text)
    if (c == '\n') ++lines;
  if (!text.empty() && text.back() == '\n') --lines;
  program.source.line_count = lines < 1 ? 1 : lines;
  flatten(*main_fn, -1, 0, 0, program);
  program.tokens = tokenize(text);
  return program;
}

Program parse_program(const std::string& text, const std::string& name) {
  return parse_tokens(tokenize(text), text, name);
}

std::vector<int> Program::function_ids() const {
  std::vector<int> out = {0};
  for (int c : nodes[0].children)
    if (nodes[static_cast<size_t>(c)].kind == NodeKind::FuncDef) out.push_back(c);
  return out;
}

int Program::find_function(const std::string& name) const {
  for (int f : function_ids())
    if (nodes[static_cast<size_t>(f)].name == name) return f;
  return -1;
}

std::vector<std::string> Program::param_names(int func_id) const {
  std::vector<std::string> out;
  for (int c : nodes[static_cast<size_t>(func_id)].children)
    if (nodes[static_cast<size_t>(c)].kind == NodeKind::Param)
      out.push_back(nodes[static_cast<size_t>(c)].name);
  return out;
}

int Program::body_block(int func_id) const {
  for (int c : nodes[static_cast<size_t>(func_id)].children)
    if (nodes[static_cast<size_t>(c)].kind == NodeKind::Block) return c;
  return -1;
}

bool equal_structure(const Program& a, const Program& b, bool compare_lines) {
  if (a.nodes.size() != b.nodes.size()) return false;
  for (size_t i = 0; i < a.nodes.size(); ++i) {
    const AstNode& x = a.nodes[i];
    const AstNode& y = b.nodes[i];
    if (x.kind != y.kind || x.children != y.children || x.parent != y.parent ||
        x.order != y.order || x.name != y.name || x.int_value != y.int_value ||
        x.bool_value != y.bool_value)
      return false;
    if (compare_lines &&
        (x.line_start != y.line_start || x.line_end != y.line_end))
      return false;
  }
  return true;
}

}  // namespace branchforge
