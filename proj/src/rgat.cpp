#include "graphmerge/rgat.hpp"

#include <cmath>

#include "graphmerge/error.hpp"
#include "graphmerge/rng.hpp"

namespace graphmerge {

namespace {

ad::Tensor glorot(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  ad::Tensor t(rows, cols);
  for (double& v : t.data()) v = rng.uniform(-limit, limit);
  return t;
}

std::string tag(const std::string& prefix, const std::string& name, std::size_t k) {
  return prefix + name + "." + std::to_string(k);
}

RgatLayerParams make_params(int in_dim, const LayerConfig& cfg, const std::string& prefix, Rng* rng) {
  cfg.validate();
  if (in_dim < 1) throw ValidationError("layer input dim must be >= 1");
  const std::size_t d_in = in_dim;
  const std::size_t d_head = cfg.head_dim();
  const std::size_t d_att = d_in;
  const std::size_t d_e = d_in;
  auto mat = [&](std::size_t r, std::size_t c) { return rng ? glorot(r, c, *rng) : ad::Tensor(r, c); };

  RgatLayerParams p;
  p.in_dim = in_dim;
  for (int k = 0; k < cfg.heads; ++k) p.head_weights.emplace_back(tag(prefix, "W", k), mat(d_in, d_head));
  const int sets = cfg.per_head_attention ? cfg.heads : 1;
  for (int k = 0; k < sets; ++k) {
    AttentionParams a;
    a.w_att = ad::Parameter(tag(prefix, "W_att", k), mat(d_att, 2 * d_in));
    a.a = ad::Parameter(tag(prefix, "a", k), mat(1, d_att));
    a.a_e = ad::Parameter(tag(prefix, "a_e", k), ad::Tensor(1, d_e));
    a.edge_emb = ad::Parameter(tag(prefix, "edge_emb", k), mat(kNumEdgeTypes, d_e));
    p.attention.push_back(std::move(a));
  }
  return p;
}

}  // namespace

void LayerConfig::validate() const {
  if (heads < 1) throw ValidationError("heads must be >= 1");
  if (out_dim < 1 || out_dim % heads != 0)
    throw ValidationError("layer width " + std::to_string(out_dim) + " not divisible by " +
                          std::to_string(heads) + " heads");
  if (activation == AttentionActivation::LeakyRelu && !(leaky_slope > 0.0))
    throw ValidationError("leaky-relu slope must be > 0");
  if (dropout < 0.0 || dropout >= 1.0) throw ValidationError("dropout must be in [0, 1)");
}

RgatLayerParams RgatLayerParams::init(int in_dim, const LayerConfig& cfg, Rng& rng,
                                      const std::string& prefix) {
  return make_params(in_dim, cfg, prefix, &rng);
}

RgatLayerParams RgatLayerParams::zeros(int in_dim, const LayerConfig& cfg, const std::string& prefix) {
  return make_params(in_dim, cfg, prefix, nullptr);
}

std::vector<ad::Parameter*> RgatLayerParams::parameters() {
  std::vector<ad::Parameter*> out;
  for (auto& w : head_weights) out.push_back(&w);
  for (auto& a : attention) {
    out.push_back(&a.w_att);
    out.push_back(&a.a);
    out.push_back(&a.a_e);
    out.push_back(&a.edge_emb);
  }
  return out;
}

std::size_t RgatLayerParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& w : head_weights) n += w.size();
  for (const auto& a : attention) n += a.w_att.size() + a.a.size() + a.a_e.size() + a.edge_emb.size();
  return n;
}

RgatStack init_stack(int in_dim, const std::vector<LayerConfig>& configs, Rng& rng,
                     const std::string& prefix) {
  RgatStack stack;
  int d = in_dim;
  for (std::size_t l = 0; l < configs.size(); ++l) {
    stack.push_back({RgatLayerParams::init(d, configs[l], rng, prefix + "layer" + std::to_string(l) + "."),
                     configs[l]});
    d = configs[l].out_dim;
  }
  return stack;
}

EdgeIndex::EdgeIndex(const TypedGraph& g) : n(g.node_count()) {
  src.reserve(g.edge_count());
  dst.reserve(g.edge_count());
  type.reserve(g.edge_count());
  for (const Edge& e : g.edges()) {
    src.push_back(e.src);
    dst.push_back(e.dst);
    type.push_back(static_cast<int>(e.type));
  }
}

std::vector<ad::Var> attention_scores(ad::Var h, const EdgeIndex& g, RgatLayerParams& p,
                                      const LayerConfig& cfg) {
  const std::size_t d_in = p.in_dim;
  if (h.cols() != d_in)
    throw ShapeError("attention: features have width " + std::to_string(h.cols()) + ", layer expects " +
                     std::to_string(d_in));
  if (h.rows() != static_cast<std::size_t>(g.n))
    throw ShapeError("attention: " + std::to_string(h.rows()) + " feature rows for " +
                     std::to_string(g.n) + " nodes");
  ad::Tape& tape = h.tape();
  std::vector<ad::Var> out;
  for (auto& ap : p.attention) {
    ad::Var w = tape.param(ap.w_att);
    ad::Var a = tape.param(ap.a);
    // a . W (h_i || h_j) = (a W_self) . h_i + (a W_nbr) . h_j
    ad::Var u_self = ad::matmul(a, ad::slice_cols(w, 0, d_in));
    ad::Var u_nbr = ad::matmul(a, ad::slice_cols(w, d_in, 2 * d_in));
    ad::Var s_self = ad::matmul_t(h, u_self);  // [n x 1]
    ad::Var s_nbr = ad::matmul_t(h, u_nbr);
    ad::Var logits = ad::add(ad::gather_rows(s_self, g.src), ad::gather_rows(s_nbr, g.dst));
    if (cfg.use_edge_types) {
      ad::Var type_score = ad::matmul_t(tape.param(ap.edge_emb), tape.param(ap.a_e));  // [3 x 1]
      logits = ad::add(logits, ad::gather_rows(type_score, g.type));
    }
    logits = cfg.activation == AttentionActivation::Relu ? ad::relu(logits)
                                                         : ad::leaky_relu(logits, cfg.leaky_slope);
    out.push_back(ad::segment_softmax(logits, g.src));
  }
  return out;
}

ad::Var layer_forward(ad::Var h, const EdgeIndex& g, RgatLayerParams& p, const LayerConfig& cfg,
                      RunMode mode) {
  cfg.validate();
  if (p.head_weights.size() != static_cast<std::size_t>(cfg.heads))
    throw ShapeError("layer has " + std::to_string(p.head_weights.size()) + " head weights, config says " +
                     std::to_string(cfg.heads));
  ad::Tape& tape = h.tape();
  auto alphas = attention_scores(h, g, p, cfg);
  if (mode.train && cfg.dropout > 0.0) {
    if (!mode.rng) throw Error("training mode without an rng");
    for (auto& alpha : alphas) alpha = ad::dropout(alpha, cfg.dropout, *mode.rng, true);
  }
  std::vector<ad::Var> heads;
  heads.reserve(cfg.heads);
  for (int k = 0; k < cfg.heads; ++k) {
    ad::Var z = ad::matmul(h, tape.param(p.head_weights[k]));  // [n x d_head]
    ad::Var messages = ad::scale_rows(ad::gather_rows(z, g.dst), alphas[alphas.size() == 1 ? 0 : k]);
    heads.push_back(ad::relu(ad::segment_sum(messages, g.src, g.n)));
  }
  ad::Var out = heads.size() == 1 ? heads.front() : ad::concat(heads, 1);
  if (mode.train && cfg.dropout > 0.0) out = ad::dropout(out, cfg.dropout, *mode.rng, true);
  return out;
}

ad::Var stack_forward(ad::Var h, const EdgeIndex& g, RgatStack& layers, RunMode mode) {
  for (auto& layer : layers) h = layer_forward(h, g, layer.params, layer.config, mode);
  return h;
}

}  // namespace graphmerge
