// branchforge: branch-targeted test generation for MiniLang programs.
// Subcommands cover the full pipeline: corpus generation and curation, graph
// construction, joint training, targeted inference, evaluation, the ablation
// grid, and a selfcheck of the numeric and metric plumbing.

#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "branchforge/corpus.hpp"
#include "branchforge/errors.hpp"
#include "branchforge/eval.hpp"
#include "branchforge/parser.hpp"
#include "branchforge/printer.hpp"
#include "branchforge/selfcheck.hpp"
#include "branchforge/textio.hpp"
#include "branchforge/trainer.hpp"

namespace fs = std::filesystem;
using namespace branchforge;

namespace {

struct GlobalOptions {
  uint64_t seed = 7;
  std::string data_dir;
  std::string out;
  std::string checkpoint;
  int delta = 1000;
  int loop_bound = 2;
  std::string variant = "attention";
  std::string branch_agg = "node";
  std::string decode = "greedy";
  int steps = 2000;
  int batch = 8;
  double lr = 3e-4;
  double weight_decay = 1e-4;
  int programs = 220;
  bool emit_plot_data = false;
  std::string seeds = "1,2,3";
};

DecodeConfig parse_decode(const std::string& spec, uint64_t seed) {
  DecodeConfig dc;
  dc.seed = seed;
  if (spec == "greedy") {
    dc.mode = DecodeConfig::Mode::Greedy;
    return dc;
  }
  if (spec.rfind("temp:", 0) == 0) {
    dc.mode = DecodeConfig::Mode::Temperature;
    dc.temperature = std::stod(spec.substr(5));
    return dc;
  }
  throw ConfigError("decode must be 'greedy' or 'temp:<t>', got '" + spec + "'");
}

TrainConfig make_train_config(const GlobalOptions& opt) {
  TrainConfig cfg;
  cfg.steps = opt.steps;
  cfg.batch_size = opt.batch;
  cfg.lr = opt.lr;
  cfg.weight_decay = opt.weight_decay;
  cfg.seed = opt.seed;
  cfg.gnn.variant = gnn_variant_from_name(opt.variant);
  cfg.gnn.branch_agg = branch_agg_from_name(opt.branch_agg);
  cfg.ft_mode = cfg.gnn.variant == GnnVariant::None;
  return cfg;
}

std::vector<uint64_t> parse_seeds(const std::string& spec) {
  std::vector<uint64_t> out;
  for (const std::string& part : split(spec, ','))
    if (!part.empty()) out.push_back(std::stoull(part));
  return out;
}

Corpus load_data(const GlobalOptions& opt) {
  if (opt.data_dir.empty())
    throw ConfigError("--data-dir (or BRANCHFORGE_DATA) is required");
  return load_corpus(opt.data_dir);
}

int cmd_gen_corpus(const GlobalOptions& opt) {
  GenerationConfig gen;
  std::vector<SourceProgram> programs =
      generate_programs(opt.seed, opt.programs, gen);
  std::string dir = opt.out.empty() ? "corpus_programs" : opt.out;
  fs::create_directories(dir);
  std::vector<std::string> names;
  for (const SourceProgram& sp : programs) {
    names.push_back(sp.name + ".ml");
    write_file_atomic((fs::path(dir) / (sp.name + ".ml")).string(), sp.text);
  }
  write_file_atomic((fs::path(dir) / "index.txt").string(),
                    join(names, "\n") + "\n");
  std::cout << "wrote " << programs.size() << " programs to " << dir << "\n";
  return 0;
}

int cmd_build_cpg(const GlobalOptions& opt, const std::string& input) {
  std::string text = read_file(input);
  Program program = parse_program(text, fs::path(input).stem().string());
  Cpg cpg = build_cpg(program);
  std::string out = opt.out.empty() ? input + ".cpg" : opt.out;
  write_file_atomic(out, serialize_cpg(cpg));
  std::cout << "cpg: " << cpg.node_count() << " nodes, "
            << cpg.edges(Relation::Ast).size() << " ast / "
            << cpg.edges(Relation::Cfg).size() << " cfg / "
            << cpg.edges(Relation::Dfg).size() << " dfg edges -> " << out << "\n";
  return 0;
}

int cmd_curate(const GlobalOptions& opt) {
  CurateConfig cfg;
  cfg.seed = opt.seed;
  cfg.program_count = opt.programs;
  cfg.loop_bound = opt.loop_bound;
  cfg.branch_cap = opt.delta;
  Corpus corpus = curate(cfg);
  std::string dir = opt.out.empty() ? opt.data_dir : opt.out;
  if (dir.empty()) throw ConfigError("curate needs --out or --data-dir");
  write_corpus(corpus, dir);
  std::cout << "curated " << corpus.manifest.record_count << " records over "
            << corpus.manifest.program_count << " programs (train/val/test = "
            << corpus.manifest.split_counts[0] << "/"
            << corpus.manifest.split_counts[1] << "/"
            << corpus.manifest.split_counts[2] << ") -> " << dir << "\n";
  return 0;
}

int cmd_train(const GlobalOptions& opt, bool ft) {
  Corpus corpus = load_data(opt);
  TrainConfig cfg = make_train_config(opt);
  std::string out = opt.out.empty() ? (ft ? "run_ft" : "run") : opt.out;
  TrainReport report =
      ft ? train_ft_baseline(corpus, cfg, out) : train(corpus, cfg, out);
  std::printf("trained %d steps in %.1fs, final loss %.4f -> %s\n",
              static_cast<int>(report.step_loss.size()), report.wall_seconds,
              report.step_loss.empty() ? 0.0 : report.step_loss.back(),
              report.checkpoint_final.c_str());
  return 0;
}

int run_inference(const GlobalOptions& opt, bool enumerate_mode,
                  const std::string& label) {
  Corpus corpus = load_data(opt);
  if (opt.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  CheckpointModel model(load_checkpoint(opt.checkpoint),
                        parse_decode(opt.decode, opt.seed));
  EvalContext ctx = EvalContext::from_corpus(corpus);
  InferenceOptions options;
  options.delta = opt.delta;
  options.loop_bound = opt.loop_bound;
  InferenceResult result =
      run_targeted_inference(model, corpus, ctx, options, enumerate_mode);
  std::string dir = opt.out.empty() ? "eval_out" : opt.out;
  fs::create_directories(dir);
  write_file_atomic((fs::path(dir) / (label + "_report.txt")).string(),
                    result.report.to_text());
  if (opt.emit_plot_data) emit_plot_data(result, dir, label);
  std::ostringstream gens;
  for (const auto& [branch, outcome] : result.records)
    gens << outcome.program_name << '\t' << std::hex << branch.branch_id
         << std::dec << '\t' << escape_field(outcome.generated) << '\n';
  write_file_atomic((fs::path(dir) / (label + "_generations.txt")).string(),
                    gens.str());
  std::cout << result.report.to_table();
  return 0;
}

int cmd_ablate(const GlobalOptions& opt) {
  Corpus corpus = load_data(opt);
  TrainConfig base = make_train_config(opt);
  std::vector<uint64_t> seeds = parse_seeds(opt.seeds);
  std::string dir = opt.out.empty() ? "ablation" : opt.out;
  AblationTable table = run_ablation_matrix(corpus, base, seeds, dir, 2);
  write_file_atomic((fs::path(dir) / "ablation.txt").string(), table.to_text());
  std::cout << table.to_table();
  return 0;
}

int cmd_selfcheck() {
  bool all = true;
  for (const SuiteResult& suite : run_selfcheck()) {
    std::printf("%s %s: %s\n", suite.passed ? "PASS" : "FAIL",
                suite.name.c_str(), suite.detail.c_str());
    all = all && suite.passed;
  }
  return all ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"branch-targeted test generation for MiniLang"};
  app.set_config("--config", "", "flat key=value configuration file");
  GlobalOptions opt;

  app.add_option("--seed", opt.seed, "global RNG seed")->capture_default_str();
  app.add_option("--data-dir", opt.data_dir, "curated corpus directory")
      ->envname("BRANCHFORGE_DATA");
  app.add_option("--out", opt.out, "output directory or file");
  app.add_option("--checkpoint", opt.checkpoint, "checkpoint path");
  app.add_option("--delta", opt.delta, "branch cap per program")
      ->capture_default_str();
  app.add_option("--loop-bound", opt.loop_bound, "loop unroll bound")
      ->capture_default_str();
  app.add_option("--variant", opt.variant, "gnn structure: attention|mean|none")
      ->capture_default_str();
  app.add_option("--branch-agg", opt.branch_agg, "branch embedding: node|pool")
      ->capture_default_str();
  app.add_option("--decode", opt.decode, "decoding: greedy or temp:<t>")
      ->capture_default_str();
  app.add_option("--steps", opt.steps, "training steps")->capture_default_str();
  app.add_option("--batch", opt.batch, "batch size")->capture_default_str();
  app.add_option("--lr", opt.lr, "learning rate")->capture_default_str();
  app.add_option("--weight-decay", opt.weight_decay, "decoupled weight decay")
      ->capture_default_str();
  app.add_option("--programs", opt.programs, "programs to generate")
      ->capture_default_str();
  app.add_flag("--emit-plot-data", opt.emit_plot_data,
               "write per-metric series files");
  app.add_option("--seeds", opt.seeds, "comma-separated seeds for ablate")
      ->capture_default_str();

  std::string cpg_input;
  CLI::App* gen = app.add_subcommand("gen-corpus", "generate synthetic programs");
  CLI::App* bcpg = app.add_subcommand("build-cpg", "build a program's graph");
  bcpg->add_option("input", cpg_input, "MiniLang source file")->required();
  CLI::App* curate_cmd = app.add_subcommand("curate", "build the training corpus");
  CLI::App* train_cmd = app.add_subcommand("train", "train the joint model");
  CLI::App* train_ft_cmd =
      app.add_subcommand("train-ft", "train the text-only baseline");
  CLI::App* infer_cmd = app.add_subcommand(
      "infer", "generate one test per enumerated branch (capped at --delta)");
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "evaluate a checkpoint on the held-out split");
  CLI::App* ablate_cmd = app.add_subcommand("ablate", "run the ablation grid");
  CLI::App* selfcheck_cmd =
      app.add_subcommand("selfcheck", "gradient/round-trip/metric suites");
  app.require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen->parsed()) return cmd_gen_corpus(opt);
    if (bcpg->parsed()) return cmd_build_cpg(opt, cpg_input);
    if (curate_cmd->parsed()) return cmd_curate(opt);
    if (train_cmd->parsed()) return cmd_train(opt, false);
    if (train_ft_cmd->parsed()) return cmd_train(opt, true);
    if (infer_cmd->parsed()) return run_inference(opt, true, "infer");
    if (eval_cmd->parsed()) return run_inference(opt, false, "eval");
    if (ablate_cmd->parsed()) return cmd_ablate(opt);
    if (selfcheck_cmd->parsed()) return cmd_selfcheck();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
