#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "branchforge/ast.hpp"

namespace branchforge {

inline constexpr int kFeatureDim = 80;       // 64 token hash + 12 kind + 4 position
inline constexpr int kTokenHashDim = 64;
inline constexpr int kKindOneHotDim = 12;
inline constexpr int kRelationCount = 3;
inline constexpr uint64_t kDefaultFeatureSeed = 0x9e3779b97f4a7c15ull;

enum class Relation { Ast = 0, Cfg = 1, Dfg = 2 };
const char* relation_name(Relation r);

struct CpgNode {
  int id = 0;
  int kind_code = 0;
  int line_start = 0;
  int line_end = 0;
  int order = 0;
};

struct CpgEdge {
  int src = 0;
  int dst = 0;
  Relation relation = Relation::Ast;
};

// Binary node mask over the graph; unavailable when no node matched.
struct BranchMask {
  std::vector<uint8_t> bits;
  int active_count = 0;

  bool available() const { return active_count > 0; }
  std::vector<int> active_ids() const;
};

// Multi-relational program graph over the AST nodes: tree edges, statement
// control flow and reaching-definition data flow, plus one feature row per
// node (stored once, row i belonging to node i).
struct Cpg {
  std::vector<CpgNode> nodes;
  std::array<std::vector<CpgEdge>, kRelationCount> edges_by_relation;
  std::vector<double> feature_matrix;  // row-major |V| x kFeatureDim
  int line_count = 0;
  int entry = 0;  // main function's FuncDef node

  // Control-flow out-neighbors in construction order. For If/Elif the taken
  // arm comes first; for While the body-entry edge precedes the exit edge.
  std::vector<std::vector<int>> cfg_out;

  int node_count() const { return static_cast<int>(nodes.size()); }
  NodeKind node_kind(int id) const {
    return kind_from_code(nodes[static_cast<size_t>(id)].kind_code);
  }
  std::span<const double> node_features(int id) const {
    return std::span<const double>(
        feature_matrix.data() + static_cast<size_t>(id) * kFeatureDim, kFeatureDim);
  }
  const std::vector<CpgEdge>& edges(Relation r) const {
    return edges_by_relation[static_cast<size_t>(r)];
  }
};

Cpg build_cpg(const Program& program, uint64_t feature_seed = kDefaultFeatureSeed);

// Feature layout: [64] L2-normalized hashed bag of the node's source tokens
// (zero when the slice has no tokens), [12] one-hot of kind_code (codes >= 12
// encode as zeros), [4] order/32, line_start/line_count, line_end/line_count,
// depth/16, the ratios clamped to [0, 1].
std::vector<double> encode_node_features(const Program& program, int node_id,
                                         uint64_t seed = kDefaultFeatureSeed);

// bits[i] = 1 iff node i's line span intersects branch_lines. Lines outside
// [1, line_count] raise LineOutOfRange. An all-zero result is the
// "unavailable" mask; downstream consumers must take the not-available path.
BranchMask derive_branch_mask(const Cpg& cpg, const std::vector<int>& branch_lines);

// Line-delimited text with hexadecimal float payloads; round-trips bit-exact.
std::string serialize_cpg(const Cpg& cpg);
Cpg parse_cpg(const std::string& text);

}  // namespace branchforge
