#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "branchforge/corpus.hpp"
#include "branchforge/trainer.hpp"

namespace branchforge {

// One generation target: a program, a branch to hit, and optionally the
// curated ground-truth test (dataset mode).
struct EvalTarget {
  std::string program_name;
  const Program* program = nullptr;
  const SourceProgram* source = nullptr;
  const Cpg* cpg = nullptr;
  Branch branch;
  BranchMask mask;
  const TestCase* ground_truth = nullptr;  // null in enumeration mode
};

struct GenerationOutcome {
  std::string program_name;
  uint64_t target_branch_id = 0;
  std::string generated;
  bool parse_ok = false;
  std::optional<ExecutionTrace> trace;
  std::vector<int> executed_lines;           // sorted unique, even on failures
  std::vector<uint64_t> executed_branch_ids; // ids observed by the execution
  bool passed = false;
};

struct EvalReport {
  double branch_acc = 0.0;
  double branch_overlap = 0.0;
  double pass_at_1 = 0.0;
  double branch_cov = 0.0;
  std::vector<std::pair<std::string, double>> per_program_cov;
  int record_count = 0;
  std::string config_fingerprint;

  std::string to_text() const;   // structured key/value form
  std::string to_table() const;  // plain human-readable table
};

// Metric primitives over (target branch, outcome) pairs. All raise
// EmptyDataset on empty input except branch_cov, which raises
// MissingBranchSet when a program lacks a branch-id set.
double branch_acc(const std::vector<std::pair<Branch, GenerationOutcome>>& records);
double branch_overlap(const std::vector<std::pair<Branch, GenerationOutcome>>& records);
double pass_at_1(const std::vector<std::pair<Branch, GenerationOutcome>>& records);
// Per program: covered = union of executed ids over PASSED generations
// intersected with that program's branch-id set; result is the unweighted
// mean of covered/total across programs.
double branch_cov(
    const std::map<std::string, std::vector<const GenerationOutcome*>>& suites,
    const std::map<std::string, std::vector<uint64_t>>& branch_ids);

// Test-case source for a target: a trained checkpoint or the ground-truth
// oracle stub used by the harness self-check.
class TestCaseModel {
 public:
  virtual ~TestCaseModel() = default;
  virtual std::string generate(const EvalTarget& target) = 0;
  virtual std::string describe() const = 0;
};

class CheckpointModel : public TestCaseModel {
 public:
  CheckpointModel(LoadedModel model, DecodeConfig decode);
  std::string generate(const EvalTarget& target) override;
  std::string describe() const override;

 private:
  LoadedModel model_;
  DecodeConfig decode_;
};

// Returns the curated test verbatim; certifies curation and metric plumbing
// jointly (every metric must report 1.0 on the held-out split).
class OracleModel : public TestCaseModel {
 public:
  explicit OracleModel(std::string label = "oracle") : label_(std::move(label)) {}
  std::string generate(const EvalTarget& target) override;
  std::string describe() const override { return label_; }

 private:
  std::string label_;
};

struct InferenceOptions {
  int delta = 1000;      // branch cap per program
  int loop_bound = 2;
  int step_limit = kDefaultStepLimit;
  bool count_infeasible = false;  // include record-less enumerated branches in
                                  // coverage denominators
};

// Holds the parsed programs/graphs an evaluation run works over.
struct EvalContext {
  std::map<std::string, Program> programs;
  std::map<std::string, Cpg> cpgs;
  std::map<std::string, SourceProgram> sources;

  static EvalContext from_corpus(const Corpus& corpus);
};

// Dataset mode: one generation per held-out record, targets from the curated
// branches. Enumeration mode: one generation per enumerated branch (capped
// at delta) for every test-split program. Both execute each generation,
// record outcomes (assertion failures still contribute executed lines and
// branch ids), and compute the four metrics.
struct InferenceResult {
  std::vector<std::pair<Branch, GenerationOutcome>> records;
  EvalReport report;
};

InferenceResult run_targeted_inference(TestCaseModel& model, const Corpus& corpus,
                                       EvalContext& context,
                                       const InferenceOptions& options,
                                       bool enumerate_mode = false);

// The ablation grid: encoder structure {attention, mean, none} on the node
// stack, plus the pooled-embedding cell for the default structure. Each cell
// is trained and evaluated per seed; the table reports per-seed and mean
// held-out BranchAcc.
struct AblationCell {
  std::string name;
  GnnVariant variant;
  BranchAgg branch_agg;
  bool ft = false;
  std::vector<double> branch_acc_per_seed;
  double mean_branch_acc = 0.0;
};

struct AblationTable {
  std::vector<AblationCell> cells;
  std::vector<uint64_t> seeds;
  std::string to_text() const;
  std::string to_table() const;
};

AblationTable run_ablation_matrix(const Corpus& corpus, const TrainConfig& base,
                                  const std::vector<uint64_t>& seeds,
                                  const std::string& work_dir, int parallel = 2);

// Per-metric series files for external plotting.
void emit_plot_data(const InferenceResult& result, const std::string& out_dir,
                    const std::string& label);

}  // namespace branchforge
