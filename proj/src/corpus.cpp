#include "branchforge/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <set>
#include <sstream>

#include "branchforge/errors.hpp"
#include "branchforge/interp.hpp"
#include "branchforge/parser.hpp"
#include "branchforge/rng.hpp"
#include "branchforge/textio.hpp"

namespace branchforge {

std::string GenerationConfig::to_text() const {
  std::ostringstream out;
  out << "gen.int_min: " << int_min << "\n"
      << "gen.int_max: " << int_max << "\n"
      << "gen.min_params: " << min_params << "\n"
      << "gen.max_params: " << max_params << "\n"
      << "gen.bool_param_prob: " << bool_param_prob << "\n"
      << "gen.min_decisions: " << min_decisions << "\n"
      << "gen.max_decisions: " << max_decisions << "\n"
      << "gen.loop_prob: " << loop_prob << "\n"
      << "gen.max_lines: " << max_lines << "\n";
  return out.str();
}

GenerationConfig GenerationConfig::from_text(
    const std::map<std::string, std::string>& kv) {
  GenerationConfig c;
  auto geti = [&](const char* k, int& v) {
    auto it = kv.find(k);
    if (it != kv.end()) v = std::stoi(it->second);
  };
  auto getd = [&](const char* k, double& v) {
    auto it = kv.find(k);
    if (it != kv.end()) v = std::stod(it->second);
  };
  geti("gen.int_min", c.int_min);
  geti("gen.int_max", c.int_max);
  geti("gen.min_params", c.min_params);
  geti("gen.max_params", c.max_params);
  getd("gen.bool_param_prob", c.bool_param_prob);
  geti("gen.min_decisions", c.min_decisions);
  geti("gen.max_decisions", c.max_decisions);
  getd("gen.loop_prob", c.loop_prob);
  geti("gen.max_lines", c.max_lines);
  return c;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw IoError("unknown split '" + name + "'");
}

// ---------------------------------------------------------------------------
// Program generation
// ---------------------------------------------------------------------------

namespace {

const char* kParamNames[] = {"a", "b", "c", "d"};
const char* kLocalNames[] = {"x", "y", "z"};

class ProgramWriter {
 public:
  ProgramWriter(Rng& rng, const GenerationConfig& cfg) : rng_(rng), cfg_(cfg) {}

  std::string generate() {
    int n_params = static_cast<int>(rng_.uniform_int(cfg_.min_params, cfg_.max_params));
    for (int i = 0; i < n_params; ++i) {
      // The first parameter stays an integer so conditions and loops always
      // have a driver.
      bool is_bool = i > 0 && rng_.bernoulli(cfg_.bool_param_prob);
      vars_.emplace_back(kParamNames[i],
                         is_bool ? Value::Type::Bool : Value::Type::Int);
    }
    std::string header = "def f(";
    for (int i = 0; i < n_params; ++i) {
      if (i) header += ", ";
      header += kParamNames[i];
    }
    header += "):";
    lines_.push_back(header);

    if (rng_.bernoulli(0.35)) {
      std::string local = kLocalNames[n_locals_++];
      stmt(1, local + " = " + int_expr());
      vars_.emplace_back(local, Value::Type::Int);
    }

    int n_decisions = cfg_.min_decisions;
    {
      // Skew toward the small end: long programs trade away mask locality.
      int span = cfg_.max_decisions - cfg_.min_decisions;
      if (span == 2) {
        n_decisions += static_cast<int>(rng_.weighted_pick({0.35, 0.45, 0.20}));
      } else if (span > 0) {
        n_decisions += static_cast<int>(rng_.uniform_int(0, span));
      }
    }
    bool loop_allowed = rng_.bernoulli(cfg_.loop_prob);
    for (int i = 0; i < n_decisions; ++i) {
      if (loop_allowed && !loop_used_ && rng_.bernoulli(0.5)) {
        emit_while();
      } else {
        emit_decision();
      }
    }
    stmt(1, "return " + return_expr());

    std::string out;
    for (const std::string& l : lines_) {
      out += l;
      out += '\n';
    }
    return out;
  }

 private:
  Rng& rng_;
  const GenerationConfig& cfg_;
  std::vector<std::pair<std::string, Value::Type>> vars_;
  std::vector<std::string> lines_;
  std::set<std::string> used_drivers_;
  int n_locals_ = 0;
  bool loop_used_ = false;

  void stmt(int indent, const std::string& text) {
    lines_.push_back(std::string(static_cast<size_t>(indent) * 2, ' ') + text);
  }

  std::vector<std::string> int_vars() const {
    std::vector<std::string> out;
    for (const auto& [n, t] : vars_)
      if (t == Value::Type::Int) out.push_back(n);
    return out;
  }

  std::vector<std::string> bool_vars() const {
    std::vector<std::string> out;
    for (const auto& [n, t] : vars_)
      if (t == Value::Type::Bool) out.push_back(n);
    return out;
  }

  std::string pick(const std::vector<std::string>& pool) {
    return pool[static_cast<size_t>(
        rng_.uniform_int(0, static_cast<int64_t>(pool.size()) - 1))];
  }

  std::string int_expr() {
    std::vector<std::string> ints = int_vars();
    size_t kind = rng_.weighted_pick({0.28, 0.14, 0.18, 0.08, 0.12, 0.08, 0.06, 0.06});
    switch (kind) {
      case 0: return pick(ints);
      case 1: return std::to_string(rng_.uniform_int(-4, 6));
      case 2: return pick(ints) + " + " + std::to_string(rng_.uniform_int(1, 5));
      case 3: return pick(ints) + " - " + std::to_string(rng_.uniform_int(1, 5));
      case 4: return pick(ints) + " + " + pick(ints);
      case 5: return pick(ints) + " * " + std::to_string(rng_.uniform_int(2, 3));
      case 6: return pick(ints) + " % " + std::to_string(rng_.uniform_int(2, 5));
      default: return pick(ints) + " // " + std::to_string(rng_.uniform_int(2, 4));
    }
  }

  // Each decision prefers a parameter that no earlier condition constrained,
  // so path combinations stay satisfiable across the input domain.
  std::string next_driver() {
    std::vector<std::string> ints = int_vars();
    for (const std::string& v : ints)
      if (!used_drivers_.count(v)) {
        used_drivers_.insert(v);
        return v;
      }
    return pick(ints);
  }

  std::string comparison(const std::string& driver) {
    size_t kind = rng_.weighted_pick({0.5, 0.38, 0.12});
    if (kind == 0)
      return driver + " == " + std::to_string(rng_.uniform_int(-2, 5));
    if (kind == 1) {
      const char* ops[] = {"<", "<=", "!="};
      return driver + " " + ops[rng_.uniform_int(0, 2)] + " " +
             std::to_string(rng_.uniform_int(-3, 5));
    }
    std::vector<std::string> others;
    for (const std::string& v : int_vars())
      if (v != driver) others.push_back(v);
    if (others.empty())
      return driver + " == " + std::to_string(rng_.uniform_int(-2, 5));
    return driver + " < " + pick(others);
  }

  std::string comparison() { return comparison(pick(int_vars())); }

  std::string condition() {
    std::vector<std::string> bools = bool_vars();
    size_t kind = rng_.weighted_pick({0.78, bools.empty() ? 0.0 : 0.14, 0.08});
    if (kind == 0) return comparison(next_driver());
    if (kind == 1)
      return rng_.bernoulli(0.4) ? "not " + pick(bools) : pick(bools);
    return comparison(next_driver()) + (rng_.bernoulli(0.5) ? " and " : " or ") +
           comparison();
  }

  std::string return_expr() {
    if (rng_.bernoulli(0.08)) return comparison();
    return int_expr();
  }

  std::string assignable() { return pick(int_vars()); }

  // May return a local that is not yet defined; the caller must assign it on
  // every arm and only then call define_target.
  std::string pick_target(bool& fresh) {
    if (n_locals_ < 3 && rng_.bernoulli(0.5)) {
      fresh = true;
      return kLocalNames[n_locals_++];
    }
    fresh = false;
    return assignable();
  }

  void define_target(const std::string& target, bool fresh) {
    if (fresh) vars_.emplace_back(target, Value::Type::Int);
  }

  void emit_decision() {
    size_t kind = rng_.weighted_pick({0.24, 0.20, 0.24, 0.10, 0.22});
    switch (kind) {
      case 0: {  // early return
        stmt(1, "if " + condition() + ":");
        stmt(2, "return " + int_expr());
        return;
      }
      case 1: {  // if/elif early returns
        stmt(1, "if " + condition() + ":");
        stmt(2, "return " + int_expr());
        stmt(1, "elif " + condition() + ":");
        stmt(2, "return " + int_expr());
        return;
      }
      case 2: {  // if/else assigning one target, possibly a fresh local
        bool fresh = false;
        std::string target = pick_target(fresh);
        stmt(1, "if " + condition() + ":");
        stmt(2, target + " = " + int_expr());
        stmt(1, "else:");
        stmt(2, target + " = " + int_expr());
        define_target(target, fresh);
        return;
      }
      case 3: {  // guard updating an already-defined integer variable
        stmt(1, "if " + condition() + ":");
        stmt(2, assignable() + " = " + int_expr());
        return;
      }
      default: {  // three-way assignment chain
        bool fresh = false;
        std::string target = pick_target(fresh);
        stmt(1, "if " + condition() + ":");
        stmt(2, target + " = " + int_expr());
        stmt(1, "elif " + condition() + ":");
        stmt(2, target + " = " + int_expr());
        stmt(1, "else:");
        stmt(2, target + " = " + int_expr());
        define_target(target, fresh);
        return;
      }
    }
  }

  void emit_while() {
    loop_used_ = true;
    std::string lv = next_driver();
    int bound = static_cast<int>(rng_.uniform_int(0, 6));
    int step = static_cast<int>(rng_.uniform_int(1, 3));
    stmt(1, "while " + lv + " < " + std::to_string(bound) + ":");
    stmt(2, lv + " = " + lv + " + " + std::to_string(step));
  }
};

}  // namespace

std::vector<SourceProgram> generate_programs(uint64_t seed, int count,
                                             const GenerationConfig& config) {
  Rng rng(seed);
  std::vector<SourceProgram> out;
  std::set<std::string> seen;
  long long attempts = 0;
  long long max_attempts = 100LL * count;
  while (static_cast<int>(out.size()) < count) {
    if (++attempts > max_attempts)
      throw GenerationExhausted("could not generate " + std::to_string(count) +
                                " unique programs in " +
                                std::to_string(max_attempts) + " attempts");
    ProgramWriter writer(rng, config);
    std::string text = writer.generate();
    int lines = static_cast<int>(std::count(text.begin(), text.end(), '\n'));
    if (lines > config.max_lines) continue;
    if (!seen.insert(text).second) continue;
    SourceProgram sp;
    char name[16];
    std::snprintf(name, sizeof(name), "p%04d", static_cast<int>(out.size()));
    sp.name = name;
    sp.text = text;
    sp.line_count = lines;
    out.push_back(std::move(sp));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Witness synthesis
// ---------------------------------------------------------------------------

std::vector<Value::Type> infer_param_types(const Program& program) {
  std::vector<std::string> params = program.param_names(0);
  std::vector<Value::Type> types(params.size(), Value::Type::Int);
  auto param_index = [&](const std::string& name) -> int {
    for (size_t i = 0; i < params.size(); ++i)
      if (params[i] == name) return static_cast<int>(i);
    return -1;
  };

  auto classify = [&](const AstNode& use) -> std::optional<Value::Type> {
    if (use.parent < 0) return std::nullopt;
    const AstNode& parent = program.node(use.parent);
    switch (parent.kind) {
      case NodeKind::If:
      case NodeKind::Elif:
      case NodeKind::While:
        // Bare variable used directly as the condition.
        return parent.children[0] == use.id
                   ? std::optional<Value::Type>(Value::Type::Bool)
                   : std::nullopt;
      case NodeKind::UnaryOp:
        return parent.name == "-" ? Value::Type::Int : Value::Type::Bool;
      case NodeKind::BinOp: {
        const std::string& op = parent.name;
        if (op == "and" || op == "or") return Value::Type::Bool;
        if (op == "==" || op == "!=") {
          int sibling = parent.children[parent.children[0] == use.id ? 1 : 0];
          NodeKind sk = program.node(sibling).kind;
          if (sk == NodeKind::BoolLit) return Value::Type::Bool;
          if (sk == NodeKind::IntLit || sk == NodeKind::BinOp ||
              sk == NodeKind::UnaryOp)
            return Value::Type::Int;
          return std::nullopt;
        }
        return Value::Type::Int;  // arithmetic or ordering
      }
      default:
        return std::nullopt;
    }
  };

  for (const AstNode& n : program.nodes) {
    if (n.kind != NodeKind::Var) continue;
    int idx = param_index(n.name);
    if (idx < 0) continue;
    if (auto t = classify(n)) types[static_cast<size_t>(idx)] = *t;
  }
  return types;
}

namespace {

// Canonical per-parameter value order: small "natural" inputs first.
std::vector<Value> domain_for(Value::Type type, const GenerationConfig& cfg) {
  std::vector<Value> out;
  if (type == Value::Type::Bool) {
    out.push_back(Value::of_bool(false));
    out.push_back(Value::of_bool(true));
    return out;
  }
  for (int v = 0; v <= cfg.int_max; ++v) out.push_back(Value::of_int(v));
  for (int v = -1; v >= cfg.int_min; --v) out.push_back(Value::of_int(v));
  return out;
}

}  // namespace

SynthesisResult synthesize_tests(const Program& program, const BranchSet& branch_set,
                                 int input_budget, const GenerationConfig& config) {
  SynthesisResult result;
  std::map<uint64_t, const Branch*> wanted;
  for (const Branch& b : branch_set.branches) wanted[b.branch_id] = &b;
  std::map<uint64_t, TestCase> found;

  std::vector<Value::Type> types = infer_param_types(program);
  std::vector<std::vector<Value>> domains;
  for (Value::Type t : types) domains.push_back(domain_for(t, config));

  std::vector<size_t> odometer(domains.size(), 0);
  const std::string& target = program.root().name;
  bool exhausted = false;

  while (result.tuples_tried < input_budget && found.size() < wanted.size()) {
    std::vector<Value> args;
    args.reserve(domains.size());
    for (size_t i = 0; i < domains.size(); ++i)
      args.push_back(domains[i][odometer[i]]);
    ++result.tuples_tried;

    ExecutionTrace trace = run_function(program, target, args);
    if (trace.outcome == Outcome::Passed && !trace.events.empty()) {
      std::vector<int> path;
      path.reserve(trace.events.size());
      for (const TraceEvent& e : trace.events) path.push_back(e.node_id);
      uint64_t id = branch_id_of_path(path);
      auto it = wanted.find(id);
      if (it != wanted.end() && !found.count(id)) {
        TestCase tc;
        tc.call_target = target;
        tc.args = args;
        tc.expected = *trace.returned;
        tc.source_text = tc.render();
        found.emplace(id, std::move(tc));
      }
    }

    // Advance the odometer, rightmost position fastest.
    if (domains.empty()) break;
    size_t pos = domains.size();
    while (pos > 0) {
      --pos;
      if (++odometer[pos] < domains[pos].size()) break;
      odometer[pos] = 0;
      if (pos == 0) exhausted = true;
    }
    if (exhausted) break;
  }

  for (const Branch& b : branch_set.branches) {
    auto it = found.find(b.branch_id);
    if (it != found.end())
      result.witnessed.emplace_back(b, it->second);
    else
      result.infeasible_ids.push_back(b.branch_id);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Prompt rendering
// ---------------------------------------------------------------------------

std::string invocation_hint_for(const Program& program) {
  size_t arity = program.param_names(0).size();
  std::string out = "check " + program.root().name + "(";
  for (size_t i = 0; i < arity; ++i) {
    if (i) out += ", ";
    out += "?";
  }
  out += ") == ?";
  return out;
}

std::string render_prompt(const SourceProgram& program, const Branch& branch,
                          const std::string& invocation_hint, bool mask_available,
                          int graph_slots) {
  std::ostringstream out;
  out << "# INSTRUCTION: generate one MiniLang check test that executes the "
         "target branch.\n";
  out << "## Module Source:\n";
  out << program.text;
  if (program.text.empty() || program.text.back() != '\n') out << '\n';
  out << "## Execution Branches Information (Line to Line executed):\n";
  out << "lines:";
  for (int l : branch.line_set) out << ' ' << l;
  out << "\npath:";
  for (int l : branch.line_path) out << ' ' << l;
  out << "\n## Branch Node Embeddings:\n";
  if (mask_available) {
    for (int i = 0; i < graph_slots; ++i) {
      if (i) out << ' ';
      out << "<|graph_pad|>";
    }
    out << '\n';
  } else {
    out << "Not available\n";
  }
  out << "## Invocation:\n";
  out << invocation_hint << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Curation
// ---------------------------------------------------------------------------

Corpus curate(const CurateConfig& config) {
  Corpus corpus;
  corpus.manifest.seed = config.seed;
  corpus.manifest.generation_config = config.gen;
  corpus.programs = generate_programs(config.seed, config.program_count, config.gen);
  corpus.manifest.program_count = static_cast<int>(corpus.programs.size());

  // Program-level split assignment: test programs never appear in train/val.
  Rng split_rng(config.seed ^ 0x5eedcafe12345678ull);
  std::vector<int> order(corpus.programs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  split_rng.shuffle(order);
  int n = static_cast<int>(order.size());
  int n_test = std::max(1, static_cast<int>(n * config.test_fraction + 0.5));
  int n_val = std::max(1, static_cast<int>(n * config.val_fraction + 0.5));
  std::vector<Split> split_of(order.size(), Split::Train);
  for (int i = 0; i < n; ++i) {
    size_t p = static_cast<size_t>(order[static_cast<size_t>(i)]);
    if (i < n_test) split_of[p] = Split::Test;
    else if (i < n_test + n_val) split_of[p] = Split::Val;
  }

  for (size_t pi = 0; pi < corpus.programs.size(); ++pi) {
    const SourceProgram& sp = corpus.programs[pi];
    Program program = parse_program(sp.text, sp.name);
    Cpg cpg = build_cpg(program);
    BranchSet branch_set =
        enumerate_branches(cpg, config.loop_bound, config.branch_cap);
    SynthesisResult synth =
        synthesize_tests(program, branch_set, config.input_budget, config.gen);
    std::string hint = invocation_hint_for(program);

    for (auto& [branch, test] : synth.witnessed) {
      DatasetRecord rec;
      rec.program_ref = sp.name;
      rec.branch = branch;
      rec.mask = derive_branch_mask(cpg, branch.line_set);
      rec.test = test;
      rec.split = split_of[pi];
      rec.prompt_text = render_prompt(sp, branch, hint, rec.mask.available(),
                                      config.graph_slots);

      // Re-validate the record's execution invariant instead of assuming it.
      ExecutionTrace replay = execute(program, rec.test);
      if (replay.outcome != Outcome::Passed)
        throw GenerationExhausted("curated test does not pass on " + sp.name);
      if (trace_to_branch(replay).branch_id != rec.branch.branch_id)
        throw GenerationExhausted("curated test hits the wrong branch on " + sp.name);

      corpus.records.push_back(std::move(rec));
    }
  }

  corpus.manifest.record_count = static_cast<int>(corpus.records.size());
  for (const DatasetRecord& r : corpus.records)
    ++corpus.manifest.split_counts[static_cast<int>(r.split)];
  return corpus;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

std::string mask_to_rle(const BranchMask& mask) {
  std::string out;
  size_t i = 0;
  while (i < mask.bits.size()) {
    size_t j = i;
    while (j < mask.bits.size() && mask.bits[j] == mask.bits[i]) ++j;
    if (!out.empty()) out += ',';
    out += mask.bits[i] ? '1' : '0';
    out += 'x';
    out += std::to_string(j - i);
    i = j;
  }
  return out;
}

BranchMask mask_from_rle(const std::string& rle) {
  BranchMask mask;
  if (rle.empty()) return mask;
  for (const std::string& run : split(rle, ',')) {
    size_t x = run.find('x');
    if (x == std::string::npos) throw IoError("bad mask run '" + run + "'");
    uint8_t bit = run.substr(0, x) == "1" ? 1 : 0;
    size_t len = static_cast<size_t>(std::stoull(run.substr(x + 1)));
    mask.bits.insert(mask.bits.end(), len, bit);
    if (bit) mask.active_count += static_cast<int>(len);
  }
  return mask;
}

std::string hex_u64(uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string ints_to_text(const std::vector<int>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<int> ints_from_text(const std::string& s) {
  std::vector<int> out;
  for (const std::string& t : split(s, ' '))
    if (!t.empty()) out.push_back(std::stoi(t));
  return out;
}

}  // namespace

void write_corpus(const Corpus& corpus, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "programs");

  std::vector<std::string> names;
  for (const SourceProgram& sp : corpus.programs) {
    names.push_back(sp.name);
    write_file_atomic((fs::path(dir) / "programs" / (sp.name + ".ml")).string(),
                      sp.text);
  }

  std::ostringstream data;
  data << "format_version: 1\n";
  for (const DatasetRecord& r : corpus.records) {
    data << "program=" << r.program_ref
         << "\tsplit=" << split_name(r.split)
         << "\tbranch_id=" << hex_u64(r.branch.branch_id)
         << "\tnode_path=" << ints_to_text(r.branch.path)
         << "\tline_path=" << ints_to_text(r.branch.line_path)
         << "\tmask=" << mask_to_rle(r.mask)
         << "\ttest=" << escape_field(r.test.source_text)
         << "\tprompt=" << escape_field(r.prompt_text) << '\n';
  }
  write_file_atomic((fs::path(dir) / "dataset.txt").string(), data.str());

  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("format_version", "1");
  kv.emplace_back("seed", std::to_string(corpus.manifest.seed));
  kv.emplace_back("program_count", std::to_string(corpus.manifest.program_count));
  kv.emplace_back("record_count", std::to_string(corpus.manifest.record_count));
  kv.emplace_back("split_train", std::to_string(corpus.manifest.split_counts[0]));
  kv.emplace_back("split_val", std::to_string(corpus.manifest.split_counts[1]));
  kv.emplace_back("split_test", std::to_string(corpus.manifest.split_counts[2]));
  kv.emplace_back("programs", join(names, " "));
  std::string manifest =
      render_kv(kv) + corpus.manifest.generation_config.to_text();
  write_file_atomic((fs::path(dir) / "manifest.txt").string(), manifest);
}

Corpus load_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!file_exists((fs::path(dir) / "manifest.txt").string()))
    throw IoError("no corpus manifest under " + dir);
  Corpus corpus;
  std::map<std::string, std::string> kv =
      parse_kv(read_file((fs::path(dir) / "manifest.txt").string()));
  corpus.manifest.seed = std::stoull(kv.at("seed"));
  corpus.manifest.program_count = std::stoi(kv.at("program_count"));
  corpus.manifest.record_count = std::stoi(kv.at("record_count"));
  corpus.manifest.split_counts[0] = std::stoi(kv.at("split_train"));
  corpus.manifest.split_counts[1] = std::stoi(kv.at("split_val"));
  corpus.manifest.split_counts[2] = std::stoi(kv.at("split_test"));
  corpus.manifest.generation_config = GenerationConfig::from_text(kv);

  for (const std::string& name : split(kv.at("programs"), ' ')) {
    if (name.empty()) continue;
    SourceProgram sp;
    sp.name = name;
    sp.text = read_file((fs::path(dir) / "programs" / (name + ".ml")).string());
    sp.line_count =
        static_cast<int>(std::count(sp.text.begin(), sp.text.end(), '\n'));
    corpus.programs.push_back(std::move(sp));
  }

  std::string data = read_file((fs::path(dir) / "dataset.txt").string());
  for (const std::string& line : split(data, '\n')) {
    if (line.empty() || line.rfind("format_version", 0) == 0) continue;
    DatasetRecord rec;
    for (const std::string& field : split(line, '\t')) {
      size_t eq = field.find('=');
      if (eq == std::string::npos)
        throw IoError("bad dataset field '" + field + "'");
      std::string key = field.substr(0, eq);
      std::string value = field.substr(eq + 1);
      if (key == "program") rec.program_ref = value;
      else if (key == "split") rec.split = split_from_name(value);
      else if (key == "branch_id")
        rec.branch.branch_id = std::stoull(value, nullptr, 16);
      else if (key == "node_path") rec.branch.path = ints_from_text(value);
      else if (key == "line_path") rec.branch.line_path = ints_from_text(value);
      else if (key == "mask") rec.mask = mask_from_rle(value);
      else if (key == "test") rec.test = parse_test(unescape_field(value));
      else if (key == "prompt") rec.prompt_text = unescape_field(value);
      else throw IoError("unknown dataset key '" + key + "'");
    }
    rec.branch.line_set = rec.branch.line_path;
    std::sort(rec.branch.line_set.begin(), rec.branch.line_set.end());
    rec.branch.line_set.erase(
        std::unique(rec.branch.line_set.begin(), rec.branch.line_set.end()),
        rec.branch.line_set.end());
    corpus.records.push_back(std::move(rec));
  }
  return corpus;
}

}  // namespace branchforge
