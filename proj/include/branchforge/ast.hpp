#pragma once

#include <string>
#include <vector>

#include "branchforge/token.hpp"

namespace branchforge {

// Node kinds. The numeric values double as the CPG kind codes; the first
// twelve get one-hot slots in the node feature layout, the rest are encoded
// as all-zero (structural kinds that token and position features already
// separate).
enum class NodeKind {
  Assign = 0, If, Elif, Else, While, Return, Call, BinOp, UnaryOp,
  Var, IntLit, BoolLit, FuncDef, Param, Block, CheckStmt,
};

inline constexpr int kNodeKindCount = 16;

inline int kind_code(NodeKind k) { return static_cast<int>(k); }
NodeKind kind_from_code(int code);
const char* kind_name(NodeKind k);

struct AstNode {
  int id = -1;
  NodeKind kind = NodeKind::Block;
  std::vector<int> children;
  int parent = -1;
  int order = 0;        // index among siblings
  int depth = 0;        // root has depth 0
  int line_start = 0;
  int line_end = 0;
  int tok_begin = 0;    // token range of the node's source slice
  int tok_end = 0;
  // Payload: identifier for FuncDef/Param/Var/Call and the assignment target
  // for Assign; operator spelling for BinOp/UnaryOp.
  std::string name;
  long long int_value = 0;
  bool bool_value = false;
};

struct SourceProgram {
  std::string name;
  std::string text;
  int line_count = 0;
};

// Parsed program. Nodes are stored dense in pre-order, root (the main
// function's FuncDef) at id 0; helper functions hang off the root as
// trailing children so the node set stays a single tree.
struct Program {
  SourceProgram source;
  std::vector<Token> tokens;
  std::vector<AstNode> nodes;

  const AstNode& root() const { return nodes.front(); }
  const AstNode& node(int id) const { return nodes[static_cast<size_t>(id)]; }
  int node_count() const { return static_cast<int>(nodes.size()); }

  std::vector<int> function_ids() const;                // main first
  int find_function(const std::string& name) const;     // -1 when absent
  std::vector<std::string> param_names(int func_id) const;
  int body_block(int func_id) const;
};

// Structural equality; line/token spans compared only when compare_lines.
bool equal_structure(const Program& a, const Program& b, bool compare_lines = false);

}  // namespace branchforge
