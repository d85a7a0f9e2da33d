#include "branchforge/branches.hpp"

#include <algorithm>

#include "branchforge/errors.hpp"
#include "branchforge/textio.hpp"

namespace branchforge {

uint64_t branch_id_of_path(const std::vector<int>& path) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (int id : path) {
    uint64_t v = static_cast<uint64_t>(id);
    h = fnv1a64(&v, sizeof(v), h);
  }
  return h;
}

std::vector<int> line_set_of_path(const Cpg& cpg, const std::vector<int>& path) {
  std::vector<int> lines;
  lines.reserve(path.size());
  for (int id : path) lines.push_back(cpg.nodes[static_cast<size_t>(id)].line_start);
  std::sort(lines.begin(), lines.end());
  lines.erase(std::unique(lines.begin(), lines.end()), lines.end());
  return lines;
}

Branch trace_to_branch(const ExecutionTrace& trace) {
  if (trace.events.empty()) throw EmptyTrace("trace has no events");
  Branch b;
  b.path.reserve(trace.events.size());
  b.line_path.reserve(trace.events.size());
  for (const TraceEvent& e : trace.events) {
    b.path.push_back(e.node_id);
    b.line_path.push_back(e.line);
  }
  std::vector<int> lines = b.line_path;
  std::sort(lines.begin(), lines.end());
  lines.erase(std::unique(lines.begin(), lines.end()), lines.end());
  b.line_set = std::move(lines);
  b.branch_id = branch_id_of_path(b.path);
  return b;
}

namespace {

class Enumerator {
 public:
  Enumerator(const Cpg& cpg, int loop_bound, int cap)
      : cpg_(cpg), loop_bound_(loop_bound), cap_(cap),
        while_entries_(cpg.nodes.size(), 0) {}

  BranchSet run() {
    const std::vector<int>& entry_out = cpg_.cfg_out[static_cast<size_t>(cpg_.entry)];
    if (!entry_out.empty()) visit(entry_out.front());
    BranchSet set;
    set.branches = std::move(branches_);
    set.total = static_cast<int>(set.branches.size());
    return set;
  }

 private:
  const Cpg& cpg_;
  int loop_bound_;
  int cap_;
  std::vector<int> while_entries_;  // body entries per while node, current path
  std::vector<int> path_;
  std::vector<Branch> branches_;

  bool full() const { return static_cast<int>(branches_.size()) >= cap_; }

  void record() {
    Branch b;
    b.path = path_;
    b.line_path.reserve(b.path.size());
    for (int id : b.path)
      b.line_path.push_back(cpg_.nodes[static_cast<size_t>(id)].line_start);
    b.line_set = line_set_of_path(cpg_, b.path);
    b.branch_id = branch_id_of_path(b.path);
    branches_.push_back(std::move(b));
  }

  void visit(int node) {
    if (full()) return;
    path_.push_back(node);
    NodeKind kind = cpg_.node_kind(node);
    if (kind == NodeKind::Return) {
      record();
    } else {
      const std::vector<int>& out = cpg_.cfg_out[static_cast<size_t>(node)];
      for (size_t i = 0; i < out.size(); ++i) {
        if (full()) break;
        // The first out-edge of a while is the body entry, budgeted per path.
        if (kind == NodeKind::While && i == 0) {
          int& count = while_entries_[static_cast<size_t>(node)];
          if (count >= loop_bound_) continue;
          ++count;
          visit(out[i]);
          --count;
        } else {
          visit(out[i]);
        }
      }
    }
    path_.pop_back();
  }
};

}  // namespace

BranchSet enumerate_branches(const Cpg& cpg, int loop_bound, int cap) {
  return Enumerator(cpg, loop_bound, cap).run();
}

}  // namespace branchforge
