#include "branchforge/eval.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <set>
#include <sstream>
#include <thread>

#include "branchforge/errors.hpp"
#include "branchforge/parser.hpp"
#include "branchforge/textio.hpp"

namespace branchforge {

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

double branch_acc(const std::vector<std::pair<Branch, GenerationOutcome>>& records) {
  if (records.empty()) throw EmptyDataset("branch_acc over zero records");
  int hits = 0;
  for (const auto& [target, outcome] : records) {
    bool hit = false;
    for (uint64_t id : outcome.executed_branch_ids)
      if (id == target.branch_id) hit = true;
    if (hit) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

double branch_overlap(const std::vector<std::pair<Branch, GenerationOutcome>>& records) {
  if (records.empty()) throw EmptyDataset("branch_overlap over zero records");
  double total = 0.0;
  for (const auto& [target, outcome] : records) {
    if (target.line_set.empty()) continue;
    int common = 0;
    for (int line : target.line_set)
      if (std::binary_search(outcome.executed_lines.begin(),
                             outcome.executed_lines.end(), line))
        ++common;
    total += static_cast<double>(common) / static_cast<double>(target.line_set.size());
  }
  return total / static_cast<double>(records.size());
}

double pass_at_1(const std::vector<std::pair<Branch, GenerationOutcome>>& records) {
  if (records.empty()) throw EmptyDataset("pass_at_1 over zero records");
  int passed = 0;
  for (const auto& [target, outcome] : records)
    if (outcome.passed) ++passed;
  return static_cast<double>(passed) / static_cast<double>(records.size());
}

double branch_cov(
    const std::map<std::string, std::vector<const GenerationOutcome*>>& suites,
    const std::map<std::string, std::vector<uint64_t>>& branch_ids) {
  if (suites.empty()) throw EmptyDataset("branch_cov over zero programs");
  double total = 0.0;
  for (const auto& [program, outcomes] : suites) {
    auto it = branch_ids.find(program);
    if (it == branch_ids.end() || it->second.empty())
      throw MissingBranchSet("no branch set for program " + program);
    std::set<uint64_t> covered;
    for (const GenerationOutcome* o : outcomes) {
      if (!o->passed) continue;  // coverage counts passing tests only
      for (uint64_t id : o->executed_branch_ids) covered.insert(id);
    }
    int hit = 0;
    for (uint64_t id : it->second)
      if (covered.count(id)) ++hit;
    total += static_cast<double>(hit) / static_cast<double>(it->second.size());
  }
  return total / static_cast<double>(suites.size());
}

std::string EvalReport::to_text() const {
  std::ostringstream out;
  out << "format_version: 1\n";
  out << "records: " << record_count << '\n';
  out << "branch_acc: " << double_to_hex(branch_acc) << '\n';
  out << "branch_overlap: " << double_to_hex(branch_overlap) << '\n';
  out << "pass_at_1: " << double_to_hex(pass_at_1) << '\n';
  out << "branch_cov: " << double_to_hex(branch_cov) << '\n';
  out << "config_fingerprint: " << config_fingerprint << '\n';
  for (const auto& [name, cov] : per_program_cov)
    out << "program_cov " << name << ' ' << double_to_hex(cov) << '\n';
  return out.str();
}

std::string EvalReport::to_table() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "  metric          value\n"
                "  branch_acc      %.4f\n"
                "  branch_overlap  %.4f\n"
                "  pass_at_1       %.4f\n"
                "  branch_cov      %.4f\n"
                "  records         %d\n",
                branch_acc, branch_overlap, pass_at_1, branch_cov, record_count);
  return buf;
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

CheckpointModel::CheckpointModel(LoadedModel model, DecodeConfig decode)
    : model_(std::move(model)), decode_(decode) {}

std::string CheckpointModel::describe() const {
  return std::string("checkpoint:") +
         gnn_variant_name(model_.config.ft_mode ? GnnVariant::None
                                                : model_.config.gnn.variant) +
         "-" + branch_agg_name(model_.config.gnn.branch_agg);
}

std::string CheckpointModel::generate(const EvalTarget& target) {
  const Vocab& vocab = Vocab::standard();
  const TrainConfig& cfg = model_.config;
  bool use_graph = !cfg.ft_mode && cfg.gnn.variant != GnnVariant::None &&
                   target.mask.available();
  std::string prompt =
      render_prompt(*target.source, target.branch,
                    invocation_hint_for(*target.program), use_graph,
                    cfg.gnn.graph_slots);
  PromptEncoding enc = encode_prompt(vocab, prompt, nullptr, cfg.lm.max_seq);
  Tensor block;
  if (use_graph)
    block = gnn_forward(*target.cpg, target.mask, cfg.gnn, model_.store);
  return lm_decode(vocab, cfg.lm, model_.store, enc,
                   use_graph ? &block : nullptr, decode_);
}

std::string OracleModel::generate(const EvalTarget& target) {
  if (!target.ground_truth)
    throw MissingBranchSet("oracle model needs targets with ground truth");
  return target.ground_truth->source_text;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

EvalContext EvalContext::from_corpus(const Corpus& corpus) {
  EvalContext ctx;
  for (const SourceProgram& sp : corpus.programs) {
    Program program = parse_program(sp.text, sp.name);
    ctx.cpgs.emplace(sp.name, build_cpg(program));
    ctx.programs.emplace(sp.name, std::move(program));
    ctx.sources.emplace(sp.name, sp);
  }
  return ctx;
}

namespace {

GenerationOutcome execute_generation(const EvalTarget& target,
                                     std::string generated, int step_limit) {
  GenerationOutcome out;
  out.program_name = target.program_name;
  out.target_branch_id = target.branch.branch_id;
  out.generated = std::move(generated);
  TestCase tc;
  try {
    tc = parse_test(out.generated);
    out.parse_ok = true;
  } catch (const ParseError&) {
    return out;  // unparseable output scores zero everywhere
  }
  ExecutionTrace trace = execute(*target.program, tc, step_limit);
  if (!trace.events.empty()) {
    Branch executed = trace_to_branch(trace);
    out.executed_branch_ids.push_back(executed.branch_id);
    out.executed_lines = executed.line_set;
  }
  out.passed = trace.outcome == Outcome::Passed;
  out.trace = std::move(trace);
  return out;
}

std::string fingerprint(const std::string& text) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(text)));
  return buf;
}

}  // namespace

InferenceResult run_targeted_inference(TestCaseModel& model, const Corpus& corpus,
                                       EvalContext& context,
                                       const InferenceOptions& options,
                                       bool enumerate_mode) {
  InferenceResult result;

  // Program -> branch ids backing the coverage denominators: the curated
  // (feasible) branches, or every enumerated branch under count_infeasible.
  std::map<std::string, std::vector<uint64_t>> feasible;
  for (const DatasetRecord& rec : corpus.records) {
    if (rec.split != Split::Test) continue;
    feasible[rec.program_ref].push_back(rec.branch.branch_id);
  }
  for (auto& [name, ids] : feasible) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  }

  std::vector<EvalTarget> targets;
  std::map<std::string, std::vector<uint64_t>> denominators;
  if (!enumerate_mode) {
    for (const DatasetRecord& rec : corpus.records) {
      if (rec.split != Split::Test) continue;
      EvalTarget t;
      t.program_name = rec.program_ref;
      t.program = &context.programs.at(rec.program_ref);
      t.source = &context.sources.at(rec.program_ref);
      t.cpg = &context.cpgs.at(rec.program_ref);
      t.branch = rec.branch;
      t.mask = rec.mask;
      t.ground_truth = &rec.test;
      targets.push_back(t);
    }
    denominators = feasible;
  } else {
    for (const auto& [name, ids] : feasible) {
      const Cpg& cpg = context.cpgs.at(name);
      BranchSet set = enumerate_branches(cpg, options.loop_bound, options.delta);
      std::vector<uint64_t> denom;
      for (const Branch& b : set.branches) {
        EvalTarget t;
        t.program_name = name;
        t.program = &context.programs.at(name);
        t.source = &context.sources.at(name);
        t.cpg = &cpg;
        t.branch = b;
        t.mask = derive_branch_mask(cpg, b.line_set);
        targets.push_back(std::move(t));
        if (options.count_infeasible) denom.push_back(b.branch_id);
      }
      denominators[name] =
          options.count_infeasible ? denom : feasible.at(name);
    }
  }
  if (targets.empty()) throw EmptyDataset("no test-split targets");

  for (const EvalTarget& target : targets) {
    GenerationOutcome outcome =
        execute_generation(target, model.generate(target), options.step_limit);
    result.records.emplace_back(target.branch, std::move(outcome));
  }

  // Deterministic order for reports and files.
  std::stable_sort(result.records.begin(), result.records.end(),
                   [](const auto& a, const auto& b) {
                     if (a.second.program_name != b.second.program_name)
                       return a.second.program_name < b.second.program_name;
                     return a.first.branch_id < b.first.branch_id;
                   });

  std::map<std::string, std::vector<const GenerationOutcome*>> suites;
  for (const auto& [branch, outcome] : result.records)
    suites[outcome.program_name].push_back(&outcome);

  result.report.branch_acc = branch_acc(result.records);
  result.report.branch_overlap = branch_overlap(result.records);
  result.report.pass_at_1 = pass_at_1(result.records);
  result.report.branch_cov = branch_cov(suites, denominators);
  result.report.record_count = static_cast<int>(result.records.size());
  for (const auto& [name, outcomes] : suites) {
    std::map<std::string, std::vector<const GenerationOutcome*>> one{{name, outcomes}};
    std::map<std::string, std::vector<uint64_t>> one_ids{{name, denominators.at(name)}};
    result.report.per_program_cov.emplace_back(name, branch_cov(one, one_ids));
  }
  result.report.config_fingerprint =
      fingerprint(model.describe() + "|delta=" + std::to_string(options.delta) +
                  "|mode=" + (enumerate_mode ? "enum" : "dataset"));
  return result;
}

// ---------------------------------------------------------------------------
// Ablation matrix
// ---------------------------------------------------------------------------

std::string AblationTable::to_text() const {
  std::ostringstream out;
  out << "format_version: 1\n";
  out << "seeds:";
  for (uint64_t s : seeds) out << ' ' << s;
  out << '\n';
  for (const AblationCell& cell : cells) {
    out << "cell " << cell.name << " mean=" << double_to_hex(cell.mean_branch_acc)
        << " values=";
    for (size_t i = 0; i < cell.branch_acc_per_seed.size(); ++i) {
      if (i) out << ',';
      out << double_to_hex(cell.branch_acc_per_seed[i]);
    }
    out << '\n';
  }
  return out.str();
}

std::string AblationTable::to_table() const {
  std::ostringstream out;
  out << "  factor        variant      branch_acc\n";
  auto row = [&](const char* factor, const std::string& name, double v) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "  %-12s  %-11s  %.4f\n", factor,
                  name.c_str(), v);
    out << buf;
  };
  for (const AblationCell& cell : cells) {
    const char* factor = cell.name == "node" || cell.name == "pool"
                             ? "branch emb"
                             : "structure";
    row(factor, cell.name, cell.mean_branch_acc);
  }
  return out.str();
}

AblationTable run_ablation_matrix(const Corpus& corpus, const TrainConfig& base,
                                  const std::vector<uint64_t>& seeds,
                                  const std::string& work_dir, int parallel) {
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  namespace fs = std::filesystem;

  struct CellSpec {
    std::string name;
    GnnVariant variant;
    BranchAgg agg;
    bool ft;
  };
  // Trained cells; the "node" embedding row reuses attention-node results.
  std::vector<CellSpec> cells = {
      {"attention", GnnVariant::Attention, BranchAgg::NodeStack, false},
      {"mean", GnnVariant::MeanSample, BranchAgg::NodeStack, false},
      {"none", GnnVariant::None, BranchAgg::NodeStack, true},
      {"pool", GnnVariant::Attention, BranchAgg::GraphPool, false},
  };

  struct Job {
    size_t cell;
    size_t seed_index;
  };
  std::vector<Job> jobs;
  for (size_t c = 0; c < cells.size(); ++c)
    for (size_t s = 0; s < seeds.size(); ++s) jobs.push_back({c, s});

  std::vector<std::vector<double>> acc(cells.size(),
                                       std::vector<double>(seeds.size(), 0.0));
  std::atomic<size_t> next_job{0};
  auto worker = [&]() {
    while (true) {
      size_t j = next_job.fetch_add(1);
      if (j >= jobs.size()) break;
      const Job& job = jobs[j];
      const CellSpec& spec = cells[job.cell];
      TrainConfig cfg = base;
      cfg.seed = seeds[job.seed_index];
      cfg.ft_mode = spec.ft;
      cfg.gnn.variant = spec.variant;
      cfg.gnn.branch_agg = spec.agg;
      std::string dir = (fs::path(work_dir) / (spec.name + "_seed" +
                                               std::to_string(cfg.seed)))
                            .string();
      TrainReport tr = train(corpus, cfg, dir);
      CheckpointModel model(load_checkpoint(tr.checkpoint_best), DecodeConfig{});
      EvalContext ctx = EvalContext::from_corpus(corpus);
      InferenceResult res =
          run_targeted_inference(model, corpus, ctx, InferenceOptions{});
      acc[job.cell][job.seed_index] = res.report.branch_acc;
    }
  };
  int n_threads = std::max(1, parallel);
  std::vector<std::thread> pool;
  for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();

  AblationTable table;
  table.seeds = seeds;
  auto push_cell = [&](const std::string& name, size_t from_cell) {
    AblationCell cell;
    cell.name = name;
    cell.variant = cells[from_cell].variant;
    cell.branch_agg = cells[from_cell].agg;
    cell.ft = cells[from_cell].ft;
    cell.branch_acc_per_seed = acc[from_cell];
    double sum = 0.0;
    for (double v : cell.branch_acc_per_seed) sum += v;
    cell.mean_branch_acc = sum / cell.branch_acc_per_seed.size();
    table.cells.push_back(std::move(cell));
  };
  push_cell("attention", 0);
  push_cell("mean", 1);
  push_cell("none", 2);
  push_cell("node", 0);  // the node-embedding row is the attention default
  push_cell("pool", 3);
  return table;
}

void emit_plot_data(const InferenceResult& result, const std::string& out_dir,
                    const std::string& label) {
  namespace fs = std::filesystem;
  std::ostringstream cov;
  cov << "# program branch_cov\n";
  for (const auto& [name, v] : result.report.per_program_cov)
    cov << name << ' ' << v << '\n';
  write_file_atomic((fs::path(out_dir) / (label + "_program_cov.txt")).string(),
                    cov.str());
  std::ostringstream rec;
  rec << "# program branch_id hit overlap passed\n";
  for (const auto& [branch, outcome] : result.records) {
    bool hit = false;
    for (uint64_t id : outcome.executed_branch_ids)
      if (id == branch.branch_id) hit = true;
    int common = 0;
    for (int line : branch.line_set)
      if (std::binary_search(outcome.executed_lines.begin(),
                             outcome.executed_lines.end(), line))
        ++common;
    double overlap = branch.line_set.empty()
                         ? 0.0
                         : static_cast<double>(common) / branch.line_set.size();
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(branch.branch_id));
    rec << outcome.program_name << ' ' << buf << ' ' << (hit ? 1 : 0) << ' '
        << overlap << ' ' << (outcome.passed ? 1 : 0) << '\n';
  }
  write_file_atomic((fs::path(out_dir) / (label + "_records.txt")).string(),
                    rec.str());
}

}  // namespace branchforge
