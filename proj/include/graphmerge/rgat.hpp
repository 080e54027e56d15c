#pragma once

#include <string>
#include <vector>

#include "graphmerge/autodiff.hpp"
#include "graphmerge/graph.hpp"

namespace graphmerge {

class Rng;

enum class AttentionActivation { Relu, LeakyRelu };

struct LayerConfig {
  int heads = 4;
  int out_dim = 64;  // width after head concatenation
  AttentionActivation activation = AttentionActivation::Relu;
  double leaky_slope = 0.2;
  // Off gives the plain GAT baseline: no edge-type term in the logits.
  bool use_edge_types = true;
  // One attention parameter set per head instead of a single shared one.
  bool per_head_attention = false;
  double dropout = 0.0;

  int head_dim() const { return out_dim / heads; }
  void validate() const;
};

// Attention scoring parameters. Logit of edge (i, j, type):
//   act(a . W_att (h_i || h_j) + a_e . edge_emb[type])
struct AttentionParams {
  ad::Parameter w_att;     // [d_att x 2*d_in]
  ad::Parameter a;         // [1 x d_att]
  ad::Parameter a_e;       // [1 x d_e]
  ad::Parameter edge_emb;  // [3 x d_e]
};

struct RgatLayerParams {
  int in_dim = 0;
  std::vector<ad::Parameter> head_weights;  // K matrices [d_in x d_head]
  std::vector<AttentionParams> attention;   // 1 (shared) or K

  // Glorot-uniform matrices; a_e starts at zero.
  static RgatLayerParams init(int in_dim, const LayerConfig& cfg, Rng& rng, const std::string& prefix);
  static RgatLayerParams zeros(int in_dim, const LayerConfig& cfg, const std::string& prefix);

  std::vector<ad::Parameter*> parameters();
  std::size_t parameter_count() const;
};

struct RgatLayer {
  RgatLayerParams params;
  LayerConfig config;
};

using RgatStack = std::vector<RgatLayer>;

RgatStack init_stack(int in_dim, const std::vector<LayerConfig>& configs, Rng& rng,
                     const std::string& prefix);

// Dropout switch. `rng` is only consulted when training.
struct RunMode {
  bool train = false;
  Rng* rng = nullptr;

  static RunMode eval() { return {}; }
  static RunMode training(Rng& r) { return {true, &r}; }
};

// Flat edge arrays of a TypedGraph, ordered by source node.
struct EdgeIndex {
  explicit EdgeIndex(const TypedGraph& g);

  int n = 0;
  std::vector<int> src;
  std::vector<int> dst;
  std::vector<int> type;
};

// Per-edge attention weights (E x 1, softmax-normalized over each source
// node's neighborhood). One entry per attention parameter set.
std::vector<ad::Var> attention_scores(ad::Var h, const EdgeIndex& g, RgatLayerParams& p,
                                      const LayerConfig& cfg);

// One relational attention layer: per head k,
//   out_i = ReLU(sum_{(i,j) in E} alpha_ij W^k h_j), heads concatenated.
ad::Var layer_forward(ad::Var h, const EdgeIndex& g, RgatLayerParams& p, const LayerConfig& cfg,
                      RunMode mode);

ad::Var stack_forward(ad::Var h, const EdgeIndex& g, RgatStack& layers, RunMode mode);

}  // namespace graphmerge
