#include "branchforge/cpg.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "branchforge/errors.hpp"
#include "branchforge/textio.hpp"

namespace branchforge {

const char* relation_name(Relation r) {
  switch (r) {
    case Relation::Ast: return "ast";
    case Relation::Cfg: return "cfg";
    case Relation::Dfg: return "dfg";
  }
  return "?";
}

std::vector<int> BranchMask::active_ids() const {
  std::vector<int> out;
  out.reserve(static_cast<size_t>(active_count));
  for (size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) out.push_back(static_cast<int>(i));
  return out;
}

std::vector<double> encode_node_features(const Program& program, int node_id,
                                         uint64_t seed) {
  const AstNode& n = program.node(node_id);
  std::vector<double> f(kFeatureDim, 0.0);

  // Hashed bag of the node's source tokens, L2-normalized.
  double norm_sq = 0.0;
  for (int t = n.tok_begin; t < n.tok_end && t < static_cast<int>(program.tokens.size()); ++t) {
    const Token& tok = program.tokens[static_cast<size_t>(t)];
    if (tok.kind == TokKind::Newline || tok.kind == TokKind::Indent ||
        tok.kind == TokKind::Dedent)
      continue;
    size_t bucket = fnv1a64(tok.lexeme, seed) % kTokenHashDim;
    f[bucket] += 1.0;
  }
  for (int i = 0; i < kTokenHashDim; ++i) norm_sq += f[i] * f[i];
  if (norm_sq > 0.0) {
    double inv = 1.0 / std::sqrt(norm_sq);
    for (int i = 0; i < kTokenHashDim; ++i) f[i] *= inv;
  }

  int code = kind_code(n.kind);
  if (code < kKindOneHotDim) f[kTokenHashDim + code] = 1.0;

  auto clamp01 = [](double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); };
  int base = kTokenHashDim + kKindOneHotDim;
  double lines = std::max(1, program.source.line_count);
  f[base + 0] = clamp01(n.order / 32.0);
  f[base + 1] = n.line_start / lines;
  f[base + 2] = n.line_end / lines;
  f[base + 3] = clamp01(n.depth / 16.0);
  return f;
}

namespace {

class CpgBuilder {
 public:
  CpgBuilder(const Program& program, uint64_t seed) : p_(program), seed_(seed) {}

  Cpg build() {
    cpg_.line_count = p_.source.line_count;
    cpg_.entry = 0;
    cpg_.nodes.reserve(p_.nodes.size());
    cpg_.feature_matrix.resize(p_.nodes.size() * kFeatureDim);
    for (const AstNode& n : p_.nodes) {
      cpg_.nodes.push_back(CpgNode{n.id, kind_code(n.kind), n.line_start,
                                   n.line_end, n.order});
      std::vector<double> f = encode_node_features(p_, n.id, seed_);
      std::copy(f.begin(), f.end(),
                cpg_.feature_matrix.begin() + static_cast<size_t>(n.id) * kFeatureDim);
      for (int c : n.children)
        add_edge(Relation::Ast, n.id, c);
    }
    for (int fid : p_.function_ids()) build_function_cfg(fid);
    cpg_.cfg_out.assign(p_.nodes.size(), {});
    for (const CpgEdge& e : cpg_.edges(Relation::Cfg))
      cpg_.cfg_out[static_cast<size_t>(e.src)].push_back(e.dst);
    for (int fid : p_.function_ids()) build_function_dfg(fid);
    return std::move(cpg_);
  }

 private:
  const Program& p_;
  uint64_t seed_;
  Cpg cpg_;

  void add_edge(Relation r, int src, int dst) {
    cpg_.edges_by_relation[static_cast<size_t>(r)].push_back(
        CpgEdge{src, dst, r});
  }

  const AstNode& node(int id) const { return p_.node(id); }

  // ---- control flow ----

  std::vector<int> block_stmts(int block_id) const {
    return node(block_id).children;
  }

  void build_function_cfg(int func_id) {
    int body = p_.body_block(func_id);
    const std::vector<int>& stmts = block_stmts(body);
    // Entry edge: FuncDef to the first statement.
    add_edge(Relation::Cfg, func_id, stmts.front());
    build_block_cfg(body, -1);
  }

  // `successor` is the statement executed after the block completes; -1 only
  // for blocks whose every path ends in a return (guaranteed for function
  // bodies by the parser's trailing-return rule).
  void build_block_cfg(int block_id, int successor) {
    const std::vector<int>& stmts = block_stmts(block_id);
    for (size_t i = 0; i < stmts.size(); ++i) {
      int sid = stmts[i];
      int next = (i + 1 < stmts.size()) ? stmts[i + 1] : successor;
      build_stmt_cfg(sid, next);
    }
  }

  void build_stmt_cfg(int sid, int next) {
    const AstNode& s = node(sid);
    switch (s.kind) {
      case NodeKind::Assign:
      case NodeKind::Call:
        add_edge(Relation::Cfg, sid, require_next(sid, next));
        return;
      case NodeKind::Return:
        return;
      case NodeKind::While: {
        int body = s.children[1];
        add_edge(Relation::Cfg, sid, block_stmts(body).front());  // enter
        add_edge(Relation::Cfg, sid, require_next(sid, next));    // exit
        build_block_cfg(body, sid);                               // back edge
        return;
      }
      case NodeKind::If: {
        // children: cond, then-block, Elif*, Else?
        std::vector<int> arms(s.children.begin() + 2, s.children.end());
        add_edge(Relation::Cfg, sid, block_stmts(s.children[1]).front());
        add_edge(Relation::Cfg, sid, arm_entry(arms, 0, sid, next));
        build_block_cfg(s.children[1], next);
        for (size_t a = 0; a < arms.size(); ++a) {
          const AstNode& arm = node(arms[a]);
          if (arm.kind == NodeKind::Elif) {
            add_edge(Relation::Cfg, arms[a], block_stmts(arm.children[1]).front());
            add_edge(Relation::Cfg, arms[a], arm_entry(arms, a + 1, sid, next));
            build_block_cfg(arm.children[1], next);
          } else {  // Else: no CFG node of its own
            build_block_cfg(arm.children[0], next);
          }
        }
        return;
      }
      default:
        throw ConfigError(std::string("unexpected statement kind ") +
                          kind_name(s.kind));
    }
  }

  // Target taken when the decision at `arms[idx-1]` (or the If itself) is
  // false: the next Elif node, the first statement of the Else block, or the
  // statement after the whole construct.
  int arm_entry(const std::vector<int>& arms, size_t idx, int sid, int next) {
    if (idx < arms.size()) {
      const AstNode& arm = node(arms[idx]);
      if (arm.kind == NodeKind::Elif) return arms[idx];
      return block_stmts(arm.children[0]).front();
    }
    return require_next(sid, next);
  }

  int require_next(int sid, int next) {
    if (next < 0)
      throw ConfigError("statement " + std::to_string(sid) +
                        " falls off the end of the function");
    return next;
  }

  // ---- data flow ----

  // Reaching definitions over the per-function statement CFG. Def sites are
  // Assign and Param nodes; uses are Var nodes, attributed to their owning
  // statement. Intraprocedural only: calls contribute Var uses in their
  // arguments and nothing across function boundaries.
  void build_function_dfg(int func_id) {
    std::vector<int> stmts;         // CFG statement nodes of this function
    collect_stmts(p_.body_block(func_id), stmts);

    std::vector<int> defs;  // def-site node ids: params then assigns
    for (int c : node(func_id).children)
      if (node(c).kind == NodeKind::Param) defs.push_back(c);
    for (int sid : stmts)
      if (node(sid).kind == NodeKind::Assign) defs.push_back(sid);
    std::map<int, int> def_index;
    for (size_t i = 0; i < defs.size(); ++i) def_index[defs[i]] = static_cast<int>(i);

    auto def_name = [&](int d) -> const std::string& { return node(d).name; };
    size_t nd = defs.size();
    using Bits = std::vector<uint8_t>;

    std::map<int, Bits> in, out;
    for (int sid : stmts) {
      in[sid] = Bits(nd, 0);
      out[sid] = Bits(nd, 0);
    }
    // Preds within the function.
    std::map<int, std::vector<int>> preds;
    for (int sid : stmts)
      for (int dst : cpg_.cfg_out[static_cast<size_t>(sid)])
        preds[dst].push_back(sid);
    // Entry statement additionally receives the parameter definitions.
    Bits entry_defs(nd, 0);
    for (size_t i = 0; i < nd; ++i)
      if (node(defs[i]).kind == NodeKind::Param) entry_defs[i] = 1;
    int entry_stmt = cpg_.cfg_out[static_cast<size_t>(func_id)].front();

    bool changed = true;
    while (changed) {
      changed = false;
      for (int sid : stmts) {
        Bits nin(nd, 0);
        if (sid == entry_stmt) nin = entry_defs;
        for (int pr : preds[sid])
          for (size_t i = 0; i < nd; ++i)
            if (out[pr][i]) nin[i] = 1;
        Bits nout = nin;
        if (node(sid).kind == NodeKind::Assign) {
          for (size_t i = 0; i < nd; ++i)
            if (def_name(defs[i]) == node(sid).name) nout[i] = 0;
          nout[static_cast<size_t>(def_index[sid])] = 1;
        }
        if (nin != in[sid] || nout != out[sid]) {
          in[sid] = std::move(nin);
          out[sid] = std::move(nout);
          changed = true;
        }
      }
    }

    // Emit def -> use edges. Uses in a statement see the defs reaching its
    // entry (an assignment's right-hand side evaluates before the def).
    for (int sid : stmts) {
      std::vector<int> uses;
      collect_vars(sid, uses);
      for (int u : uses) {
        const std::string& name = node(u).name;
        for (size_t i = 0; i < nd; ++i)
          if (in[sid][i] && def_name(defs[i]) == name)
            add_edge(Relation::Dfg, defs[i], u);
      }
    }
  }

  void collect_stmts(int block_id, std::vector<int>& out) {
    for (int sid : block_stmts(block_id)) {
      const AstNode& s = node(sid);
      out.push_back(sid);
      if (s.kind == NodeKind::While) {
        collect_stmts(s.children[1], out);
      } else if (s.kind == NodeKind::If) {
        collect_stmts(s.children[1], out);
        for (size_t a = 2; a < s.children.size(); ++a) {
          const AstNode& arm = node(s.children[a]);
          if (arm.kind == NodeKind::Elif) {
            out.push_back(s.children[a]);
            collect_stmts(arm.children[1], out);
          } else {
            collect_stmts(arm.children[0], out);
          }
        }
      }
    }
  }

  // Var nodes in the statement's own expressions (conditions, right-hand
  // sides, call arguments), not those of nested statements.
  void collect_vars(int sid, std::vector<int>& out) {
    const AstNode& s = node(sid);
    switch (s.kind) {
      case NodeKind::Assign:
      case NodeKind::Return:
        collect_vars_expr(s.children[0], out);
        return;
      case NodeKind::Call:
        for (int c : s.children) collect_vars_expr(c, out);
        return;
      case NodeKind::If:
      case NodeKind::Elif:
      case NodeKind::While:
        collect_vars_expr(s.children[0], out);
        return;
      default:
        return;
    }
  }

  void collect_vars_expr(int eid, std::vector<int>& out) {
    const AstNode& e = node(eid);
    if (e.kind == NodeKind::Var) out.push_back(eid);
    for (int c : e.children) collect_vars_expr(c, out);
  }
};

}  // namespace

Cpg build_cpg(const Program& program, uint64_t feature_seed) {
  return CpgBuilder(program, feature_seed).build();
}

BranchMask derive_branch_mask(const Cpg& cpg, const std::vector<int>& branch_lines) {
  std::set<int> lines(branch_lines.begin(), branch_lines.end());
  for (int l : lines)
    if (l < 1 || l > cpg.line_count)
      throw LineOutOfRange("line " + std::to_string(l) + " outside [1, " +
                           std::to_string(cpg.line_count) + "]");
  BranchMask mask;
  mask.bits.assign(cpg.nodes.size(), 0);
  for (const CpgNode& n : cpg.nodes) {
    auto it = lines.lower_bound(n.line_start);
    if (it != lines.end() && *it <= n.line_end) {
      mask.bits[static_cast<size_t>(n.id)] = 1;
      ++mask.active_count;
    }
  }
  return mask;
}

std::string serialize_cpg(const Cpg& cpg) {
  std::ostringstream out;
  out << "format_version: 1\n";
  size_t edge_count = 0;
  for (const auto& es : cpg.edges_by_relation) edge_count += es.size();
  out << "header " << cpg.node_count() << ' ' << kFeatureDim << ' '
      << kRelationCount << ' ' << cpg.line_count << ' ' << cpg.entry << '\n';
  for (const CpgNode& n : cpg.nodes) {
    out << "node " << n.id << ' ' << n.kind_code << ' ' << n.line_start << ' '
        << n.line_end << ' ' << n.order;
    std::span<const double> f = cpg.node_features(n.id);
    for (double v : f) out << ' ' << double_to_hex(v);
    out << '\n';
  }
  for (const auto& es : cpg.edges_by_relation)
    for (const CpgEdge& e : es)
      out << "edge " << static_cast<int>(e.relation) << ' ' << e.src << ' '
          << e.dst << '\n';
  (void)edge_count;
  return out.str();
}

Cpg parse_cpg(const std::string& text) {
  Cpg cpg;
  std::istringstream in(text);
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line.rfind("format_version", 0) == 0) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "header") {
      int nv = 0, d = 0, r = 0;
      ls >> nv >> d >> r >> cpg.line_count >> cpg.entry;
      if (d != kFeatureDim || r != kRelationCount)
        throw IoError("cpg header mismatch: d=" + std::to_string(d) +
                      " r=" + std::to_string(r));
      cpg.nodes.reserve(static_cast<size_t>(nv));
      cpg.feature_matrix.reserve(static_cast<size_t>(nv) * kFeatureDim);
      have_header = true;
    } else if (tag == "node") {
      CpgNode n;
      ls >> n.id >> n.kind_code >> n.line_start >> n.line_end >> n.order;
      std::string hex;
      for (int i = 0; i < kFeatureDim; ++i) {
        ls >> hex;
        cpg.feature_matrix.push_back(hex_to_double(hex));
      }
      cpg.nodes.push_back(n);
    } else if (tag == "edge") {
      int rel = 0;
      CpgEdge e;
      ls >> rel >> e.src >> e.dst;
      e.relation = static_cast<Relation>(rel);
      cpg.edges_by_relation[static_cast<size_t>(rel)].push_back(e);
    } else {
      throw IoError("unknown cpg record '" + tag + "'");
    }
  }
  if (!have_header) throw IoError("cpg text has no header record");
  cpg.cfg_out.assign(cpg.nodes.size(), {});
  for (const CpgEdge& e : cpg.edges(Relation::Cfg))
    cpg.cfg_out[static_cast<size_t>(e.src)].push_back(e.dst);
  return cpg;
}

}  // namespace branchforge
