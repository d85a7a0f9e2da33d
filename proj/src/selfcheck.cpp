#include "branchforge/selfcheck.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "branchforge/corpus.hpp"
#include "branchforge/eval.hpp"
#include "branchforge/parser.hpp"
#include "branchforge/printer.hpp"
#include "branchforge/rng.hpp"
#include "branchforge/tensor.hpp"

namespace branchforge {

namespace {

Tensor randt(int r, int c, Rng& rng, double lo = 0.1, double hi = 1.0) {
  std::vector<double> v(static_cast<size_t>(r) * c);
  for (double& x : v) {
    double m = lo + (hi - lo) * rng.uniform_real();
    x = rng.bernoulli(0.5) ? m : -m;  // keep magnitudes away from kinks
  }
  return Tensor::from_values(r, c, std::move(v));
}

}  // namespace

SuiteResult selfcheck_gradients() {
  SuiteResult result{"gradients", true, ""};
  Rng rng(20240601);
  double worst = 0.0;
  std::string worst_op;
  auto check = [&](const char* name, ParameterStore& store,
                   const std::function<Tensor()>& fwd) {
    GradCheckResult r = finite_diff_check(fwd, store, 1e-5, 1e-6, 200,
                                          rng.next_u64(), false);
    if (r.max_rel_err > worst) {
      worst = r.max_rel_err;
      worst_op = name;
    }
    if (!r.passed) result.passed = false;
  };

  {
    ParameterStore s;
    s.add("a", randt(3, 4, rng));
    s.add("b", randt(3, 4, rng));
    check("add", s, [&] { return ops::sum_all(ops::mul(ops::add(s.get("a"), s.get("b")), s.get("b"))); });
    check("sub", s, [&] { return ops::sum_all(ops::mul(ops::sub(s.get("a"), s.get("b")), s.get("a"))); });
    check("mul", s, [&] { return ops::sum_all(ops::mul(s.get("a"), s.get("b"))); });
    check("scalar_mul", s, [&] { return ops::sum_all(ops::scalar_mul(s.get("a"), 1.7)); });
  }
  {
    ParameterStore s;
    s.add("m", randt(4, 5, rng));
    s.add("v", randt(1, 5, rng));
    check("add_rowvec", s, [&] {
      return ops::sum_all(ops::mul(ops::add_rowvec(s.get("m"), s.get("v")), s.get("m")));
    });
    check("broadcast_row", s, [&] {
      return ops::sum_all(ops::mul(ops::broadcast_row(s.get("v"), 4), s.get("m")));
    });
    check("mean_rows", s, [&] {
      return ops::sum_all(ops::mul(ops::mean_rows(s.get("m")), s.get("v")));
    });
  }
  {
    ParameterStore s;
    s.add("col", randt(4, 1, rng));
    s.add("row", randt(1, 3, rng));
    check("add_outer", s, [&] {
      Tensor o = ops::add_outer(s.get("col"), s.get("row"));
      return ops::sum_all(ops::mul(o, o));
    });
  }
  {
    ParameterStore s;
    s.add("a", randt(3, 4, rng));
    s.add("b", randt(4, 2, rng));
    s.add("bt", randt(2, 4, rng));
    s.add("at", randt(4, 3, rng));
    check("matmul", s, [&] {
      Tensor c = ops::matmul(s.get("a"), s.get("b"));
      return ops::sum_all(ops::mul(c, c));
    });
    check("matmul_nt", s, [&] {
      Tensor c = ops::matmul_nt(s.get("a"), s.get("bt"));
      return ops::sum_all(ops::mul(c, c));
    });
    check("matmul_tn", s, [&] {
      Tensor c = ops::matmul_tn(s.get("at"), s.get("b"));
      return ops::sum_all(ops::mul(c, c));
    });
    check("transpose", s, [&] {
      Tensor c = ops::transpose(s.get("a"));
      return ops::sum_all(ops::mul(c, c));
    });
  }
  {
    ParameterStore s;
    s.add("a", randt(3, 4, rng));
    s.add("b", randt(2, 4, rng));
    s.add("c", randt(3, 2, rng));
    check("concat_rows", s, [&] {
      Tensor o = ops::concat_rows({s.get("a"), s.get("b")});
      return ops::sum_all(ops::mul(o, o));
    });
    check("concat_cols", s, [&] {
      Tensor o = ops::concat_cols({s.get("a"), s.get("c")});
      return ops::sum_all(ops::mul(o, o));
    });
    check("slice_rows", s, [&] {
      Tensor o = ops::slice_rows(s.get("a"), 1, 3);
      return ops::sum_all(ops::mul(o, o));
    });
    check("slice_cols", s, [&] {
      Tensor o = ops::slice_cols(s.get("a"), 1, 4);
      return ops::sum_all(ops::mul(o, o));
    });
    check("gather_rows", s, [&] {
      Tensor o = ops::gather_rows(s.get("a"), {2, 0, 2});
      return ops::sum_all(ops::mul(o, o));
    });
    check("inject_rows", s, [&] {
      Tensor o = ops::inject_rows(s.get("a"), {0, 2}, s.get("b"));
      return ops::sum_all(ops::mul(o, o));
    });
  }
  {
    ParameterStore s;
    s.add("x", randt(4, 6, rng));
    s.add("g", randt(1, 6, rng));
    s.add("bias", randt(1, 6, rng));
    check("softmax_rows", s, [&] {
      Tensor o = ops::softmax_rows(s.get("x"));
      return ops::sum_all(ops::mul(o, s.get("x")));
    });
    check("relu", s, [&] { return ops::sum_all(ops::relu(s.get("x"))); });
    check("leaky_relu", s, [&] {
      return ops::sum_all(ops::leaky_relu(s.get("x"), 0.2));
    });
    check("layer_norm", s, [&] {
      Tensor o = ops::layer_norm(s.get("x"), s.get("g"), s.get("bias"));
      return ops::sum_all(ops::mul(o, o));
    });
    check("cross_entropy", s, [&] {
      return ops::cross_entropy(s.get("x"), {1, 3, 0, 5}, {1, 0, 1, 1});
    });
  }

  std::ostringstream detail;
  detail << "max_rel_err=" << worst << " at " << worst_op;
  result.detail = detail.str();
  return result;
}

SuiteResult selfcheck_roundtrip() {
  SuiteResult result{"roundtrip", true, ""};
  GenerationConfig gc;
  std::vector<SourceProgram> programs = generate_programs(0xf00d, 60, gc);
  int checked = 0;
  for (const SourceProgram& sp : programs) {
    Program parsed = parse_program(sp.text, sp.name);
    Program reparsed = parse_program(pretty_print(parsed), sp.name);
    if (!equal_structure(parsed, reparsed, true)) {
      result.passed = false;
      result.detail = "round-trip mismatch on " + sp.name;
      return result;
    }
    // Dense pre-order ids and nested line spans.
    for (const AstNode& n : parsed.nodes) {
      if (n.id != &n - parsed.nodes.data()) result.passed = false;
      if (n.parent >= 0) {
        const AstNode& p = parsed.node(n.parent);
        if (p.line_start > n.line_start || n.line_end > p.line_end)
          result.passed = false;
      }
    }
    ++checked;
  }
  result.detail = std::to_string(checked) + " programs round-tripped";
  return result;
}

SuiteResult selfcheck_metrics() {
  SuiteResult result{"metrics", true, ""};
  Rng rng(0xca11);
  int sets = 50;
  for (int s = 0; s < sets; ++s) {
    // Random synthetic outcome sets over a handful of programs.
    std::vector<std::pair<Branch, GenerationOutcome>> records;
    std::map<std::string, std::vector<uint64_t>> branch_ids;
    std::map<std::string, std::vector<const GenerationOutcome*>> suites;
    int n_programs = static_cast<int>(rng.uniform_int(1, 4));
    for (int p = 0; p < n_programs; ++p) {
      std::string name = "prog" + std::to_string(p);
      int n_branches = static_cast<int>(rng.uniform_int(1, 6));
      for (int b = 0; b < n_branches; ++b)
        branch_ids[name].push_back(static_cast<uint64_t>(p * 100 + b));
      int n_records = static_cast<int>(rng.uniform_int(1, 8));
      for (int r = 0; r < n_records; ++r) {
        Branch target;
        target.branch_id = branch_ids[name][static_cast<size_t>(
            rng.uniform_int(0, n_branches - 1))];
        int n_lines = static_cast<int>(rng.uniform_int(1, 6));
        for (int l = 0; l < n_lines; ++l)
          target.line_set.push_back(static_cast<int>(rng.uniform_int(1, 12)));
        std::sort(target.line_set.begin(), target.line_set.end());
        target.line_set.erase(
            std::unique(target.line_set.begin(), target.line_set.end()),
            target.line_set.end());
        GenerationOutcome out;
        out.program_name = name;
        out.target_branch_id = target.branch_id;
        out.parse_ok = rng.bernoulli(0.8);
        if (out.parse_ok) {
          out.executed_branch_ids.push_back(
              rng.bernoulli(0.6) ? target.branch_id
                                 : branch_ids[name][static_cast<size_t>(
                                       rng.uniform_int(0, n_branches - 1))]);
          int m_lines = static_cast<int>(rng.uniform_int(0, 8));
          for (int l = 0; l < m_lines; ++l)
            out.executed_lines.push_back(static_cast<int>(rng.uniform_int(1, 12)));
          std::sort(out.executed_lines.begin(), out.executed_lines.end());
          out.executed_lines.erase(
              std::unique(out.executed_lines.begin(), out.executed_lines.end()),
              out.executed_lines.end());
          out.passed = rng.bernoulli(0.5);
        }
        records.emplace_back(std::move(target), std::move(out));
      }
    }
    for (const auto& [branch, outcome] : records)
      suites[outcome.program_name].push_back(&outcome);

    // Independent recount, written as plainly as possible.
    int hits = 0, passed = 0;
    double overlap_sum = 0.0;
    for (const auto& [target, outcome] : records) {
      for (uint64_t id : outcome.executed_branch_ids)
        if (id == target.branch_id) {
          ++hits;
          break;
        }
      if (outcome.passed) ++passed;
      int common = 0;
      for (int line : target.line_set)
        for (int e : outcome.executed_lines)
          if (e == line) ++common;
      overlap_sum += target.line_set.empty()
                         ? 0.0
                         : static_cast<double>(common) / target.line_set.size();
    }
    double want_acc = static_cast<double>(hits) / records.size();
    double want_pass = static_cast<double>(passed) / records.size();
    double want_overlap = overlap_sum / records.size();
    double want_cov = 0.0;
    for (const auto& [name, ids] : branch_ids) {
      std::set<uint64_t> covered;
      auto it = suites.find(name);
      if (it != suites.end())
        for (const GenerationOutcome* o : it->second)
          if (o->passed)
            for (uint64_t id : o->executed_branch_ids) covered.insert(id);
      int hit = 0;
      for (uint64_t id : ids)
        if (covered.count(id)) ++hit;
      want_cov += static_cast<double>(hit) / ids.size();
    }
    want_cov /= branch_ids.size();

    if (branch_acc(records) != want_acc || pass_at_1(records) != want_pass ||
        branch_overlap(records) != want_overlap ||
        branch_cov(suites, branch_ids) != want_cov) {
      result.passed = false;
      result.detail = "metric mismatch on randomized set " + std::to_string(s);
      return result;
    }
  }
  result.detail = std::to_string(sets) + " randomized outcome sets matched exactly";
  return result;
}

std::vector<SuiteResult> run_selfcheck() {
  return {selfcheck_gradients(), selfcheck_roundtrip(), selfcheck_metrics()};
}

}  // namespace branchforge
