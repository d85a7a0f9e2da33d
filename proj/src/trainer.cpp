#include "branchforge/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>

#include "branchforge/errors.hpp"
#include "branchforge/parser.hpp"
#include "branchforge/textio.hpp"

namespace branchforge {

std::vector<std::pair<std::string, std::string>> TrainConfig::meta() const {
  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("variant", gnn_variant_name(ft_mode ? GnnVariant::None : gnn.variant));
  kv.emplace_back("branch_agg", branch_agg_name(gnn.branch_agg));
  kv.emplace_back("gnn_layers", std::to_string(gnn.layers));
  kv.emplace_back("gnn_hidden", std::to_string(gnn.hidden_dim));
  kv.emplace_back("gnn_heads", std::to_string(gnn.heads));
  kv.emplace_back("relation_pool",
                  gnn.relation_pool == RelationPool::Mean ? "mean" : "sum");
  kv.emplace_back("graph_slots", std::to_string(gnn.graph_slots));
  kv.emplace_back("lm_layers", std::to_string(lm.layers));
  kv.emplace_back("model_dim", std::to_string(lm.model_dim));
  kv.emplace_back("lm_heads", std::to_string(lm.heads));
  kv.emplace_back("max_seq", std::to_string(lm.max_seq));
  kv.emplace_back("ffn_dim", std::to_string(lm.ffn_dim));
  kv.emplace_back("vocab_size", std::to_string(lm.vocab_size));
  kv.emplace_back("ft_mode", ft_mode ? "1" : "0");
  kv.emplace_back("seed", std::to_string(seed));
  kv.emplace_back("steps", std::to_string(steps));
  kv.emplace_back("batch_size", std::to_string(batch_size));
  kv.emplace_back("lr", double_to_hex(lr));
  kv.emplace_back("weight_decay", double_to_hex(weight_decay));
  return kv;
}

TrainConfig TrainConfig::from_meta(const std::map<std::string, std::string>& meta) {
  TrainConfig c;
  auto get = [&](const char* k) -> std::string {
    auto it = meta.find(k);
    if (it == meta.end()) throw IoError(std::string("checkpoint meta missing ") + k);
    return it->second;
  };
  c.ft_mode = get("ft_mode") == "1";
  c.gnn.variant = gnn_variant_from_name(get("variant"));
  if (c.ft_mode) c.gnn.variant = GnnVariant::None;
  c.gnn.branch_agg = branch_agg_from_name(get("branch_agg"));
  c.gnn.layers = std::stoi(get("gnn_layers"));
  c.gnn.hidden_dim = std::stoi(get("gnn_hidden"));
  c.gnn.heads = std::stoi(get("gnn_heads"));
  c.gnn.relation_pool =
      get("relation_pool") == "sum" ? RelationPool::Sum : RelationPool::Mean;
  c.gnn.graph_slots = std::stoi(get("graph_slots"));
  c.lm.layers = std::stoi(get("lm_layers"));
  c.lm.model_dim = std::stoi(get("model_dim"));
  c.gnn.model_dim = c.lm.model_dim;
  c.lm.heads = std::stoi(get("lm_heads"));
  c.lm.max_seq = std::stoi(get("max_seq"));
  c.lm.ffn_dim = std::stoi(get("ffn_dim"));
  c.lm.vocab_size = std::stoi(get("vocab_size"));
  c.lm.graph_slots = c.gnn.graph_slots;
  c.seed = std::stoull(get("seed"));
  c.steps = std::stoi(get("steps"));
  c.batch_size = std::stoi(get("batch_size"));
  c.lr = hex_to_double(get("lr"));
  c.weight_decay = hex_to_double(get("weight_decay"));
  return c;
}

namespace {

struct PreparedRecord {
  size_t record_index;
  const Cpg* cpg;
  BranchMask mask;
  PromptEncoding encoding;
  bool use_graph;
};

struct PreparedCorpus {
  std::map<std::string, Program> programs;
  std::map<std::string, Cpg> cpgs;
  std::vector<PreparedRecord> train, val;
};

// Parses programs once and encodes every record. In ft mode prompts are
// re-rendered with the not-available marker so the text matches what the
// model actually conditions on.
PreparedCorpus prepare(const Corpus& corpus, const TrainConfig& config) {
  const Vocab& vocab = Vocab::standard();
  PreparedCorpus prep;
  for (const SourceProgram& sp : corpus.programs) {
    Program program = parse_program(sp.text, sp.name);
    prep.cpgs.emplace(sp.name, build_cpg(program));
    prep.programs.emplace(sp.name, std::move(program));
  }
  for (size_t i = 0; i < corpus.records.size(); ++i) {
    const DatasetRecord& rec = corpus.records[i];
    if (rec.split == Split::Test) continue;
    auto pit = prep.programs.find(rec.program_ref);
    if (pit == prep.programs.end())
      throw IoError("record references unknown program " + rec.program_ref);
    PreparedRecord pr;
    pr.record_index = i;
    pr.cpg = &prep.cpgs.at(rec.program_ref);
    pr.mask = rec.mask;
    pr.use_graph = !config.ft_mode && config.gnn.variant != GnnVariant::None &&
                   rec.mask.available();
    std::string prompt = pr.use_graph
                             ? rec.prompt_text
                             : render_prompt(
                                   SourceProgram{pit->second.source.name,
                                                 pit->second.source.text,
                                                 pit->second.source.line_count},
                                   rec.branch, invocation_hint_for(pit->second),
                                   false, config.gnn.graph_slots);
    pr.encoding =
        encode_prompt(vocab, prompt, &rec.test.source_text, config.lm.max_seq);
    (rec.split == Split::Train ? prep.train : prep.val).push_back(std::move(pr));
  }
  return prep;
}

Tensor record_loss(const PreparedRecord& pr, const TrainConfig& config,
                   ParameterStore& store) {
  Tensor emb = token_embeddings(pr.encoding, store);
  if (pr.use_graph) {
    Tensor block = gnn_forward(*pr.cpg, pr.mask, config.gnn, store);
    emb = inject_graph_embeddings(emb, pr.encoding.graph_slot_positions, block);
  }
  Tensor logits = lm_forward(emb, config.lm, store);
  return training_loss(pr.encoding, logits);
}

double validation_loss(const PreparedCorpus& prep, const TrainConfig& config,
                       ParameterStore& store) {
  size_t n = std::min(static_cast<size_t>(config.val_subset), prep.val.size());
  if (n == 0) return 0.0;
  double total = 0.0;
  for (size_t i = 0; i < n; ++i)
    total += record_loss(prep.val[i], config, store).item();
  store.zero_grads();  // forward-only; drop any stale state
  return total / static_cast<double>(n);
}

std::string write_log(const TrainConfig& config, const TrainReport& report) {
  std::ostringstream out;
  out << "format_version: 1\n";
  for (const auto& [k, v] : config.meta()) out << k << ": " << v << '\n';
  for (size_t i = 0; i < report.step_loss.size(); ++i)
    out << "step " << (i + 1) << ' ' << double_to_hex(report.step_loss[i]) << '\n';
  for (const auto& [step, loss] : report.val_loss)
    out << "val " << step << ' ' << double_to_hex(loss) << '\n';
  return out.str();
}

}  // namespace

TrainReport train(const Corpus& corpus, const TrainConfig& config,
                  const std::string& out_dir) {
  namespace fs = std::filesystem;
  auto t0 = std::chrono::steady_clock::now();

  TrainConfig cfg = config;
  cfg.lm.vocab_size = Vocab::standard().size();
  cfg.gnn.graph_slots = cfg.lm.graph_slots;
  cfg.gnn.model_dim = cfg.lm.model_dim;
  if (cfg.ft_mode) cfg.gnn.variant = GnnVariant::None;

  PreparedCorpus prep = prepare(corpus, cfg);
  if (prep.train.empty()) throw EmptyDataset("no train-split records");

  ParameterStore store;
  Rng init_rng(cfg.seed);
  if (!cfg.ft_mode && cfg.gnn.variant != GnnVariant::None)
    init_gnn_params(store, cfg.gnn, init_rng);
  init_lm_params(store, cfg.lm, init_rng);

  Rng batch_rng(cfg.seed ^ 0xb47c4e5a11ull);
  TrainReport report;
  double best_val = 1e300;

  fs::create_directories(out_dir);
  std::string final_path = (fs::path(out_dir) / "ckpt_final.txt").string();
  std::string best_path = (fs::path(out_dir) / "ckpt_best.txt").string();
  report.checkpoint_final = final_path;
  report.checkpoint_best = best_path;

  for (int step = 1; step <= cfg.steps; ++step) {
    std::vector<Tensor> losses;
    std::vector<size_t> picked;
    for (int b = 0; b < cfg.batch_size; ++b) {
      size_t idx = static_cast<size_t>(batch_rng.uniform_int(
          0, static_cast<int64_t>(prep.train.size()) - 1));
      picked.push_back(idx);
      losses.push_back(record_loss(prep.train[idx], cfg, store));
    }
    Tensor batch_loss = losses[0];
    for (size_t i = 1; i < losses.size(); ++i)
      batch_loss = ops::add(batch_loss, losses[i]);
    batch_loss = ops::scalar_mul(batch_loss, 1.0 / losses.size());
    double loss_value = batch_loss.item();
    if (!std::isfinite(loss_value)) {
      std::string ids;
      for (size_t idx : picked)
        ids += std::to_string(prep.train[idx].record_index) + " ";
      throw NonFiniteLoss("at step " + std::to_string(step) + ", records " + ids);
    }
    batch_loss.backward();
    adam_step(store, cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay);
    report.step_loss.push_back(loss_value);

    if (cfg.val_every > 0 && (step % cfg.val_every == 0 || step == cfg.steps)) {
      double val = validation_loss(prep, cfg, store);
      report.val_loss.emplace_back(step, val);
      if (!prep.val.empty() && val < best_val) {
        best_val = val;
        write_file_atomic(best_path, store.serialize(cfg.meta()));
      }
    }
  }

  write_file_atomic(final_path, store.serialize(cfg.meta()));
  if (!file_exists(best_path))
    write_file_atomic(best_path, store.serialize(cfg.meta()));
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_file_atomic((fs::path(out_dir) / "train_log.txt").string(),
                    write_log(cfg, report));
  return report;
}

TrainReport train_ft_baseline(const Corpus& corpus, TrainConfig config,
                              const std::string& out_dir) {
  config.ft_mode = true;
  config.gnn.variant = GnnVariant::None;
  return train(corpus, config, out_dir);
}

LoadedModel load_checkpoint(const std::string& path) {
  if (!file_exists(path)) throw CheckpointNotFound(path);
  auto [store, meta] = ParameterStore::deserialize(read_file(path));
  LoadedModel model{std::move(store), TrainConfig::from_meta(meta)};
  return model;
}

}  // namespace branchforge
