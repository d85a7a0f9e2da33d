#include "branchforge/gnn.hpp"

#include <algorithm>
#include <cmath>

#include "branchforge/errors.hpp"

namespace branchforge {

const char* gnn_variant_name(GnnVariant v) {
  switch (v) {
    case GnnVariant::Attention: return "attention";
    case GnnVariant::MeanSample: return "mean";
    case GnnVariant::None: return "none";
  }
  return "?";
}

GnnVariant gnn_variant_from_name(const std::string& s) {
  if (s == "attention") return GnnVariant::Attention;
  if (s == "mean") return GnnVariant::MeanSample;
  if (s == "none") return GnnVariant::None;
  throw ConfigError("unknown gnn variant '" + s + "'");
}

const char* branch_agg_name(BranchAgg a) {
  return a == BranchAgg::NodeStack ? "node" : "pool";
}

BranchAgg branch_agg_from_name(const std::string& s) {
  if (s == "node") return BranchAgg::NodeStack;
  if (s == "pool") return BranchAgg::GraphPool;
  throw ConfigError("unknown branch aggregation '" + s + "'");
}

void GnnConfig::validate() const {
  if (variant == GnnVariant::Attention && hidden_dim % heads != 0)
    throw ConfigError("hidden_dim " + std::to_string(hidden_dim) +
                      " not divisible by heads " + std::to_string(heads));
  if (!use_projection && model_dim != hidden_dim)
    throw ConfigError("hidden_dim must equal model_dim unless use_projection");
}

namespace {

std::string lname(int layer, const char* leaf) {
  return "gnn.l" + std::to_string(layer) + "." + leaf;
}

std::string rname(int layer, int relation, const char* leaf) {
  return "gnn.l" + std::to_string(layer) + ".r" + std::to_string(relation) +
         "." + leaf;
}

Tensor random_tensor(int rows, int cols, double stddev, Rng& rng) {
  std::vector<double> v(static_cast<size_t>(rows) * cols);
  for (double& x : v) x = rng.normal(0.0, stddev);
  return Tensor::from_values(rows, cols, std::move(v));
}

// Undirected neighborhoods per relation: u is a neighbor of v when an edge
// joins them in either direction.
std::vector<std::vector<int>> neighborhoods(const Cpg& cpg, Relation r) {
  std::vector<std::vector<int>> out(cpg.nodes.size());
  for (const CpgEdge& e : cpg.edges(r)) {
    out[static_cast<size_t>(e.src)].push_back(e.dst);
    out[static_cast<size_t>(e.dst)].push_back(e.src);
  }
  for (auto& v : out) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return out;
}

}  // namespace

void init_gnn_params(ParameterStore& store, const GnnConfig& config, Rng& rng) {
  config.validate();
  if (config.variant == GnnVariant::None) return;
  for (int k = 1; k <= config.layers; ++k) {
    int in_dim = k == 1 ? config.feature_dim : config.hidden_dim;
    double stddev = 1.0 / std::sqrt(static_cast<double>(in_dim));
    store.add(lname(k, "self.w"),
              random_tensor(in_dim, config.hidden_dim, stddev, rng));
    store.add(lname(k, "self.b"), Tensor::zeros(1, config.hidden_dim));
    for (int r = 0; r < kRelationCount; ++r) {
      store.add(rname(k, r, "w"),
                random_tensor(in_dim, config.hidden_dim, stddev, rng));
      if (config.variant == GnnVariant::Attention) {
        store.add(rname(k, r, "aq"),
                  random_tensor(config.heads, in_dim, stddev, rng));
        store.add(rname(k, r, "an"),
                  random_tensor(config.heads, in_dim, stddev, rng));
      }
    }
  }
  store.add("gnn.pad", random_tensor(1, config.hidden_dim, 0.02, rng));
  if (config.use_projection)
    store.add("gnn.proj",
              random_tensor(config.hidden_dim, config.model_dim,
                            1.0 / std::sqrt(config.hidden_dim), rng));
}

std::vector<double> attention_weights(const std::vector<double>& query_state,
                                      const std::vector<std::vector<double>>& states,
                                      const std::vector<double>& a_query,
                                      const std::vector<double>& a_neighbor) {
  if (states.empty()) throw ShapeMismatch("attention over an empty set");
  double q_score = 0.0;
  for (size_t i = 0; i < query_state.size(); ++i)
    q_score += a_query[i] * query_state[i];
  std::vector<double> scores(states.size());
  for (size_t s = 0; s < states.size(); ++s) {
    double v = q_score;
    for (size_t i = 0; i < states[s].size(); ++i)
      v += a_neighbor[i] * states[s][i];
    scores[s] = v;
  }
  double mx = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (double& s : scores) {
    s = std::exp(s - mx);
    sum += s;
  }
  for (double& s : scores) s /= sum;
  return scores;
}

// Layer update: h' = leaky(pool_j(msg_j . W_j) + h . W_self + b). A relation
// with an empty neighborhood at node v contributes an exactly-zero message
// row there, so its parameters neither affect the output nor receive
// gradients from such nodes; the self state flows through the shared
// residual projection instead.
Tensor gnn_forward(const Cpg& cpg, const BranchMask& mask,
                   const GnnConfig& config, ParameterStore& store) {
  config.validate();
  if (config.variant == GnnVariant::None)
    throw ConfigError("gnn_forward called with variant none");
  if (!mask.available())
    throw MaskUnavailable("branch mask has no active nodes");

  int n = cpg.node_count();
  Tensor h = Tensor::from_values(
      n, kFeatureDim,
      std::vector<double>(cpg.feature_matrix.begin(), cpg.feature_matrix.end()));

  std::vector<std::vector<std::vector<int>>> hoods;
  for (int r = 0; r < kRelationCount; ++r)
    hoods.push_back(neighborhoods(cpg, static_cast<Relation>(r)));

  // Per-relation constants, shared across layers.
  std::vector<Tensor> allow_masks;  // 0 on self+neighbors, -1e30 elsewhere
  std::vector<Tensor> live_rows;    // n x 1: 1 when the neighborhood is nonempty
  std::vector<Tensor> mean_adj;     // row-normalized neighbor averaging
  for (int r = 0; r < kRelationCount; ++r) {
    const auto& hood = hoods[static_cast<size_t>(r)];
    std::vector<double> live(static_cast<size_t>(n), 0.0);
    for (int v = 0; v < n; ++v)
      live[static_cast<size_t>(v)] = hood[static_cast<size_t>(v)].empty() ? 0.0 : 1.0;
    live_rows.push_back(Tensor::from_values(n, 1, std::move(live)));
    if (config.variant == GnnVariant::Attention) {
      std::vector<double> m(static_cast<size_t>(n) * n, -1e30);
      for (int v = 0; v < n; ++v) {
        m[static_cast<size_t>(v) * n + v] = 0.0;
        for (int u : hood[static_cast<size_t>(v)])
          m[static_cast<size_t>(v) * n + u] = 0.0;
      }
      allow_masks.push_back(Tensor::from_values(n, n, std::move(m)));
    } else {
      std::vector<double> m(static_cast<size_t>(n) * n, 0.0);
      for (int v = 0; v < n; ++v) {
        const auto& nb = hood[static_cast<size_t>(v)];
        if (nb.empty()) continue;
        double w = 1.0 / static_cast<double>(nb.size());
        for (int u : nb) m[static_cast<size_t>(v) * n + u] = w;
      }
      mean_adj.push_back(Tensor::from_values(n, n, std::move(m)));
    }
  }

  int head_dim = config.hidden_dim / std::max(1, config.heads);
  for (int k = 1; k <= config.layers; ++k) {
    std::vector<Tensor> relation_terms;
    for (int r = 0; r < kRelationCount; ++r) {
      Tensor msg;
      if (config.variant == GnnVariant::Attention) {
        // Softmax over {self} + neighbors of linear compatibility scores on
        // the raw states; heads project into their output slice. Rows with
        // no neighbors are zeroed so empty relations vanish exactly.
        Tensor aq = store.get(rname(k, r, "aq"));
        Tensor an = store.get(rname(k, r, "an"));
        Tensor w = store.get(rname(k, r, "w"));
        std::vector<Tensor> head_outs;
        for (int hd = 0; hd < config.heads; ++hd) {
          Tensor aq_row = ops::slice_rows(aq, hd, hd + 1);  // 1 x in
          Tensor an_row = ops::slice_rows(an, hd, hd + 1);
          Tensor q = ops::matmul_nt(h, aq_row);             // n x 1
          Tensor s = ops::matmul_nt(h, an_row);             // n x 1
          Tensor scores = ops::add(ops::add_outer(q, ops::transpose(s)),
                                   allow_masks[static_cast<size_t>(r)]);
          Tensor weights = ops::softmax_rows(scores);       // n x n
          Tensor agg = ops::matmul(weights, h);             // n x in
          head_outs.push_back(ops::matmul(
              agg, ops::slice_cols(w, hd * head_dim, (hd + 1) * head_dim)));
        }
        msg = ops::concat_cols(head_outs);
        Tensor live = ops::add_outer(live_rows[static_cast<size_t>(r)],
                                     Tensor::zeros(1, config.hidden_dim));
        msg = ops::mul(msg, live);
      } else {
        // Mean over the neighbor states, then the relation's linear map.
        Tensor nb = ops::matmul(mean_adj[static_cast<size_t>(r)], h);
        msg = ops::matmul(nb, store.get(rname(k, r, "w")));
      }
      relation_terms.push_back(msg);
    }
    Tensor pooled = relation_terms[0];
    for (size_t r = 1; r < relation_terms.size(); ++r)
      pooled = ops::add(pooled, relation_terms[r]);
    if (config.relation_pool == RelationPool::Mean)
      pooled = ops::scalar_mul(pooled, 1.0 / relation_terms.size());
    Tensor self_term = ops::matmul(h, store.get(lname(k, "self.w")));
    h = ops::leaky_relu(
        ops::add_rowvec(ops::add(pooled, self_term), store.get(lname(k, "self.b"))),
        config.leaky_slope);
  }

  // Branch aggregation over the masked set, ascending node id; oversized
  // masks keep the smallest ids.
  std::vector<int> ids = mask.active_ids();
  if (static_cast<int>(ids.size()) > config.graph_slots)
    ids.resize(static_cast<size_t>(config.graph_slots));

  Tensor block;
  if (config.branch_agg == BranchAgg::NodeStack) {
    Tensor stacked = ops::gather_rows(h, ids);
    int missing = config.graph_slots - static_cast<int>(ids.size());
    if (missing > 0) {
      Tensor pad = ops::broadcast_row(store.get("gnn.pad"), missing);
      block = ops::concat_rows({stacked, pad});
    } else {
      block = stacked;
    }
  } else {
    Tensor pooled = ops::mean_rows(ops::gather_rows(h, ids));
    block = ops::broadcast_row(pooled, config.graph_slots);
  }
  if (config.use_projection) block = ops::matmul(block, store.get("gnn.proj"));
  return block;
}

}  // namespace branchforge
