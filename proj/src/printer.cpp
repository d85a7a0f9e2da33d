#include "branchforge/printer.hpp"

#include <functional>

#include "branchforge/errors.hpp"

namespace branchforge {

namespace {

// Precedence levels, loosest first. Matches the parser.
int op_prec(const std::string& op) {
  if (op == "or") return 1;
  if (op == "and") return 2;
  if (op == "<" || op == "<=" || op == "==" || op == "!=") return 4;
  if (op == "+" || op == "-") return 5;
  return 6;  // * // %
}

void emit_expr(const Program& p, int id, int min_prec, std::string& out) {
  const AstNode& n = p.node(id);
  switch (n.kind) {
    case NodeKind::IntLit:
      out += std::to_string(n.int_value);
      return;
    case NodeKind::BoolLit:
      out += n.bool_value ? "true" : "false";
      return;
    case NodeKind::Var:
      out += n.name;
      return;
    case NodeKind::Call: {
      out += n.name;
      out += '(';
      for (size_t i = 0; i < n.children.size(); ++i) {
        if (i) out += ", ";
        emit_expr(p, n.children[i], 0, out);
      }
      out += ')';
      return;
    }
    case NodeKind::UnaryOp: {
      int prec = n.name == "not" ? 3 : 7;
      bool parens = prec < min_prec;
      if (parens) out += '(';
      out += n.name == "not" ? "not " : "-";
      emit_expr(p, n.children[0], prec, out);
      if (parens) out += ')';
      return;
    }
    case NodeKind::BinOp: {
      int prec = op_prec(n.name);
      bool parens = prec < min_prec;
      if (parens) out += '(';
      // Left-associative: right operand needs strictly higher precedence.
      emit_expr(p, n.children[0], prec, out);
      out += ' ';
      out += n.name;
      out += ' ';
      emit_expr(p, n.children[1], prec + 1, out);
      if (parens) out += ')';
      return;
    }
    default:
      throw ConfigError(std::string("not an expression node: ") + kind_name(n.kind));
  }
}

void emit_stmt(const Program& p, int id, int indent, std::string& out);

void emit_block(const Program& p, int id, int indent, std::string& out) {
  for (int c : p.node(id).children) emit_stmt(p, c, indent, out);
}

void indent_to(std::string& out, int indent) {
  out.append(static_cast<size_t>(indent) * 2, ' ');
}

void emit_funcdef(const Program& p, int id, int indent, std::string& out) {
  const AstNode& n = p.node(id);
  indent_to(out, indent);
  out += "def ";
  out += n.name;
  out += '(';
  bool first = true;
  for (int c : n.children) {
    if (p.node(c).kind != NodeKind::Param) continue;
    if (!first) out += ", ";
    first = false;
    out += p.node(c).name;
  }
  out += "):\n";
  for (int c : n.children)
    if (p.node(c).kind == NodeKind::Block) emit_block(p, c, indent + 1, out);
  // Helper functions attached to the root print after the main body.
  for (int c : n.children)
    if (p.node(c).kind == NodeKind::FuncDef) emit_funcdef(p, c, indent, out);
}

void emit_stmt(const Program& p, int id, int indent, std::string& out) {
  const AstNode& n = p.node(id);
  switch (n.kind) {
    case NodeKind::Assign:
      indent_to(out, indent);
      out += n.name;
      out += " = ";
      emit_expr(p, n.children[0], 0, out);
      out += '\n';
      return;
    case NodeKind::Return:
      indent_to(out, indent);
      out += "return ";
      emit_expr(p, n.children[0], 0, out);
      out += '\n';
      return;
    case NodeKind::Call:
      indent_to(out, indent);
      emit_expr(p, id, 0, out);
      out += '\n';
      return;
    case NodeKind::While:
      indent_to(out, indent);
      out += "while ";
      emit_expr(p, n.children[0], 0, out);
      out += ":\n";
      emit_block(p, n.children[1], indent + 1, out);
      return;
    case NodeKind::If: {
      indent_to(out, indent);
      out += "if ";
      emit_expr(p, n.children[0], 0, out);
      out += ":\n";
      emit_block(p, n.children[1], indent + 1, out);
      for (size_t i = 2; i < n.children.size(); ++i)
        emit_stmt(p, n.children[i], indent, out);
      return;
    }
    case NodeKind::Elif:
      indent_to(out, indent);
      out += "elif ";
      emit_expr(p, n.children[0], 0, out);
      out += ":\n";
      emit_block(p, n.children[1], indent + 1, out);
      return;
    case NodeKind::Else:
      indent_to(out, indent);
      out += "else:\n";
      emit_block(p, n.children[0], indent + 1, out);
      return;
    case NodeKind::FuncDef:
      emit_funcdef(p, id, indent, out);
      return;
    case NodeKind::Block:
      emit_block(p, id, indent, out);
      return;
    default:
      // Expression fragment out of statement context: print it bare.
      emit_expr(p, id, 0, out);
      out += '\n';
      return;
  }
}

}  // namespace

std::string print_expr(const Program& program, int node_id) {
  std::string out;
  emit_expr(program, node_id, 0, out);
  return out;
}

std::string pretty_print(const Program& program, int node_id, int indent) {
  std::string out;
  emit_stmt(program, node_id, indent, out);
  return out;
}

std::string pretty_print(const Program& program) {
  return pretty_print(program, 0, 0);
}

}  // namespace branchforge
