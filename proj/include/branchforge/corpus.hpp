#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "branchforge/branches.hpp"
#include "branchforge/cpg.hpp"
#include "branchforge/testcase.hpp"

namespace branchforge {

inline constexpr int kGraphSlots = 32;  // graph-pad placeholder count

struct GenerationConfig {
  int int_min = -8;           // input domain for integer parameters
  int int_max = 8;
  int min_params = 2;
  int max_params = 4;
  double bool_param_prob = 0.15;
  int min_decisions = 2;
  int max_decisions = 4;
  double loop_prob = 0.45;     // at most one loop per program
  int max_lines = 40;

  std::string to_text() const;
  static GenerationConfig from_text(const std::map<std::string, std::string>& kv);
};

enum class Split { Train, Val, Test };
const char* split_name(Split s);
Split split_from_name(const std::string& name);

// One curated training example: the prompt, the target branch with its node
// mask, and a ground-truth test whose execution provably hits that branch.
struct DatasetRecord {
  std::string program_ref;
  std::string prompt_text;
  Branch branch;
  BranchMask mask;
  TestCase test;
  Split split = Split::Train;
};

struct CorpusManifest {
  uint64_t seed = 0;
  int program_count = 0;
  int record_count = 0;
  int split_counts[3] = {0, 0, 0};
  GenerationConfig generation_config;
};

struct CurateConfig {
  uint64_t seed = 7;
  int program_count = 220;
  GenerationConfig gen;
  int loop_bound = 2;
  int branch_cap = 1000;
  // Covers the full product domain of four integer parameters (17^4), so the
  // scan is exhaustive for every generated shape.
  int input_budget = 100000;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  int graph_slots = kGraphSlots;
};

struct Corpus {
  CorpusManifest manifest;
  std::vector<SourceProgram> programs;
  std::vector<DatasetRecord> records;
};

// Deterministic synthetic program generator. Each output parses, ends every
// function path in a return, stays within the configured size bounds and is
// textually unique within the batch. Throws GenerationExhausted when
// uniqueness cannot be met within 100 * count attempts.
std::vector<SourceProgram> generate_programs(uint64_t seed, int count,
                                             const GenerationConfig& config);

struct SynthesisResult {
  std::vector<std::pair<Branch, TestCase>> witnessed;
  std::vector<uint64_t> infeasible_ids;  // enumerated but never observed
  int tuples_tried = 0;
};

// Brute-force witness search: scans argument tuples in canonical order (ints
// 0,1,..,max,-1,..,min per position, booleans false then true, rightmost
// position fastest) and keeps, per enumerated branch, the first tuple whose
// trace matches it. Expected values are the observed returns, so every
// witnessed test passes by construction.
SynthesisResult synthesize_tests(const Program& program, const BranchSet& branch_set,
                                 int input_budget, const GenerationConfig& config);

// Infers each parameter's domain (int or bool) from its uses. Parameters
// without evidence default to int.
std::vector<Value::Type> infer_param_types(const Program& program);

// Renders the instruction prompt for one (program, branch) pair: header,
// module source, the branch's sorted line list and ordered line path, the
// graph-pad run (or `Not available`), and the invocation skeleton.
std::string render_prompt(const SourceProgram& program, const Branch& branch,
                          const std::string& invocation_hint, bool mask_available,
                          int graph_slots = kGraphSlots);

std::string invocation_hint_for(const Program& program);

Corpus curate(const CurateConfig& config);

void write_corpus(const Corpus& corpus, const std::string& dir);
Corpus load_corpus(const std::string& dir);

}  // namespace branchforge
