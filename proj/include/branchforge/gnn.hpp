#pragma once

#include <string>
#include <vector>

#include "branchforge/cpg.hpp"
#include "branchforge/rng.hpp"
#include "branchforge/tensor.hpp"

namespace branchforge {

enum class GnnVariant { Attention, MeanSample, None };
enum class RelationPool { Mean, Sum };
enum class BranchAgg { NodeStack, GraphPool };

const char* gnn_variant_name(GnnVariant v);
GnnVariant gnn_variant_from_name(const std::string& s);
const char* branch_agg_name(BranchAgg a);
BranchAgg branch_agg_from_name(const std::string& s);

struct GnnConfig {
  int layers = 3;
  int hidden_dim = 64;
  int heads = 8;  // attention variant only
  GnnVariant variant = GnnVariant::Attention;
  RelationPool relation_pool = RelationPool::Mean;
  BranchAgg branch_agg = BranchAgg::NodeStack;
  int graph_slots = 32;
  int feature_dim = kFeatureDim;
  double leaky_slope = 0.2;
  // Optional learned map from hidden_dim to the language model width; when
  // off the two widths must match and rows substitute directly.
  bool use_projection = false;
  int model_dim = 64;

  void validate() const;
};

// Registers every encoder parameter (per layer and relation: the projection
// matrix, bias, and per-head attention vectors; plus the learned pad row) in
// `store` under the "gnn." prefix.
void init_gnn_params(ParameterStore& store, const GnnConfig& config, Rng& rng);

// Runs the K-layer heterogeneous message-passing encoder over the graph and
// returns the branch embedding block: graph_slots rows of width hidden_dim
// (or model_dim under use_projection). NodeStack stacks the masked nodes'
// final states in ascending id order, truncating to the smallest ids and
// padding with the learned pad row; GraphPool means over the masked set and
// broadcasts. Throws MaskUnavailable when the mask has no active nodes.
Tensor gnn_forward(const Cpg& cpg, const BranchMask& mask,
                   const GnnConfig& config, ParameterStore& store);

// Softmax attention weights for one query over its aggregation set (the
// query's own state plus neighbor states). Scores are a_query . q +
// a_neighbor . s_i; weights are nonnegative and sum to one.
std::vector<double> attention_weights(const std::vector<double>& query_state,
                                      const std::vector<std::vector<double>>& states,
                                      const std::vector<double>& a_query,
                                      const std::vector<double>& a_neighbor);

}  // namespace branchforge
