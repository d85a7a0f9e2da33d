#pragma once

#include <string>
#include <vector>

#include "branchforge/corpus.hpp"
#include "branchforge/gnn.hpp"
#include "branchforge/lm.hpp"

namespace branchforge {

struct TrainConfig {
  int steps = 2000;
  int batch_size = 8;
  double lr = 3e-4;
  double weight_decay = 1e-4;  // decoupled, the l2 coefficient
  uint64_t seed = 1;
  int val_every = 100;
  int val_subset = 64;  // validation loss over a fixed prefix of the val split
  GnnConfig gnn;
  LmConfig lm;
  bool ft_mode = false;  // no graph encoder; every mask treated unavailable

  std::vector<std::pair<std::string, std::string>> meta() const;
  static TrainConfig from_meta(const std::map<std::string, std::string>& meta);
};

struct TrainReport {
  std::vector<double> step_loss;
  std::vector<std::pair<int, double>> val_loss;
  std::string checkpoint_final;
  std::string checkpoint_best;
  double wall_seconds = 0.0;  // kept out of written artifacts
};

// Joint end-to-end optimization of the graph encoder and language model.
// Deterministic for a fixed (corpus, config): initialization, batch order
// and arithmetic are all seed-driven. Writes ckpt_final.txt, ckpt_best.txt
// (best validation loss) and train_log.txt under out_dir. A non-finite loss
// aborts with NonFiniteLoss naming the offending record.
TrainReport train(const Corpus& corpus, const TrainConfig& config,
                  const std::string& out_dir);

// Text-only baseline: identical pipeline with the graph encoder removed and
// every record forced onto the not-available path.
TrainReport train_ft_baseline(const Corpus& corpus, TrainConfig config,
                              const std::string& out_dir);

// Loads a checkpoint and reconstructs its configuration from the metadata.
struct LoadedModel {
  ParameterStore store;
  TrainConfig config;
};
LoadedModel load_checkpoint(const std::string& path);

}  // namespace branchforge
