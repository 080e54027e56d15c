#include "graphmerge/train.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "graphmerge/error.hpp"
#include "graphmerge/rng.hpp"

namespace graphmerge {

using nlohmann::json;

// ---- graph mode ---------------------------------------------------------

GraphMode GraphMode::parse(std::string_view text) {
  if (text == "merge" || text == "union") return {Kind::Merge, {}};
  if (text == "intersect") return {Kind::Intersect, {}};
  if (text == "feature" || text == "feature-ensemble") return {Kind::Feature, {}};
  constexpr std::string_view prefix = "single:";
  if (text.substr(0, prefix.size()) == prefix && text.size() > prefix.size())
    return {Kind::Single, std::string(text.substr(prefix.size()))};
  throw ValidationError("unknown graph mode \"" + std::string(text) +
                        "\" (expected merge, intersect, feature or single:<parser_id>)");
}

std::string GraphMode::str() const {
  switch (kind) {
    case Kind::Merge:
      return "merge";
    case Kind::Intersect:
      return "intersect";
    case Kind::Feature:
      return "feature";
    case Kind::Single:
      return "single:" + parser_id;
  }
  return "?";
}

std::vector<TypedGraph> build_graphs(const AlignedParseSet& set, const GraphMode& mode) {
  switch (mode.kind) {
    case GraphMode::Kind::Merge:
      return {graph_merge(std::span<const DepParse>(set.parses))};
    case GraphMode::Kind::Intersect:
      return {graph_intersect(set.parses)};
    case GraphMode::Kind::Single:
      for (const auto& p : set.parses)
        if (p.parser_id == mode.parser_id) return {build_tree_graph(p)};
      throw ValidationError("no parse from parser \"" + mode.parser_id + "\"");
    case GraphMode::Kind::Feature: {
      std::vector<TypedGraph> out;
      for (const auto& p : set.parses) out.push_back(build_tree_graph(p));
      return out;
    }
  }
  throw ValidationError("bad graph mode");
}

// ---- config -------------------------------------------------------------

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ValidationError(msg); };
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (epochs < 0) fail("epochs must be >= 0");
  if (hidden_dim != 64 && hidden_dim != 128 && hidden_dim != 256) fail("hidden_dim must be one of 64, 128, 256");
  if (heads != 4 && heads != 8) fail("heads must be 4 or 8");
  if (layers < 2 || layers > 4) fail("layers must be 2, 3 or 4");
  if (dropout < 0.1 || dropout > 0.3) fail("dropout must be in [0.1, 0.3]");
  if (l2 < 0.0) fail("l2 must be >= 0");
  if (dev_fraction < 0.0 || dev_fraction >= 1.0) fail("dev_fraction must be in [0, 1)");
  if (embed_dim < 1) fail("embed_dim must be >= 1");
  if (max_len < 0) fail("max_len must be >= 0");
  if (mlp_dim < 0) fail("mlp_dim must be >= 0");
}

json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"hidden_dim", c.hidden_dim},
          {"heads", c.heads},
          {"layers", c.layers},
          {"dropout", c.dropout},
          {"l2", c.l2},
          {"seed", c.seed},
          {"dev_fraction", c.dev_fraction},
          {"graph_mode", c.graph_mode.str()},
          {"edge_types", c.edge_types},
          {"position", c.position},
          {"embed_dim", c.embed_dim},
          {"max_len", c.max_len},
          {"mlp_dim", c.mlp_dim},
          {"attention_activation", c.attention_activation == AttentionActivation::Relu ? "relu" : "leaky_relu"},
          {"per_head_attention", c.per_head_attention},
          {"optimizer", c.optimizer == OptimizerKind::Adam ? "adam" : "sgd"}};
}

bool apply_setting(TrainConfig& c, const std::string& key, const json& v) {
  try {
    if (key == "learning_rate") c.learning_rate = v.get<double>();
    else if (key == "batch_size") c.batch_size = v.get<int>();
    else if (key == "epochs") c.epochs = v.get<int>();
    else if (key == "hidden_dim") c.hidden_dim = v.get<int>();
    else if (key == "heads") c.heads = v.get<int>();
    else if (key == "layers") c.layers = v.get<int>();
    else if (key == "dropout") c.dropout = v.get<double>();
    else if (key == "l2") c.l2 = v.get<double>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "dev_fraction") c.dev_fraction = v.get<double>();
    else if (key == "graph_mode") c.graph_mode = GraphMode::parse(v.get<std::string>());
    else if (key == "edge_types") c.edge_types = v.get<bool>();
    else if (key == "position") c.position = v.get<bool>();
    else if (key == "embed_dim") c.embed_dim = v.get<int>();
    else if (key == "max_len") c.max_len = v.get<int>();
    else if (key == "mlp_dim") c.mlp_dim = v.get<int>();
    else if (key == "per_head_attention") c.per_head_attention = v.get<bool>();
    else if (key == "attention_activation") {
      auto s = v.get<std::string>();
      if (s == "relu") c.attention_activation = AttentionActivation::Relu;
      else if (s == "leaky_relu") c.attention_activation = AttentionActivation::LeakyRelu;
      else throw ValidationError("attention_activation must be relu or leaky_relu");
    } else if (key == "optimizer") {
      auto s = v.get<std::string>();
      if (s == "adam") c.optimizer = OptimizerKind::Adam;
      else if (s == "sgd") c.optimizer = OptimizerKind::Sgd;
      else throw ValidationError("optimizer must be adam or sgd");
    } else {
      return false;
    }
  } catch (const json::exception& e) {
    throw ValidationError("config key \"" + key + "\": " + e.what());
  }
  return true;
}

// ---- data ---------------------------------------------------------------

DevSplit split_dev(std::size_t n, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction >= 1.0) throw ValidationError("dev fraction must be in [0, 1)");
  std::size_t n_dev = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (fraction > 0.0 && n >= 1) n_dev = std::max<std::size_t>(n_dev, 1);
  if (n >= 2) n_dev = std::min(n_dev, n - 1);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  DevSplit split;
  split.dev.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_dev));
  split.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_dev), order.end());
  std::sort(split.dev.begin(), split.dev.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

std::vector<TrainExample> prepare_examples(std::span<const AlignedParseSet> data, const GraphMode& mode) {
  std::vector<TrainExample> out;
  out.reserve(data.size());
  for (std::size_t k = 0; k < data.size(); ++k) {
    TrainExample te{data[k].example, {}};
    try {
      for (const auto& g : build_graphs(data[k], mode)) te.graphs.emplace_back(g);
    } catch (const Error& e) {
      throw ValidationError("example " + std::to_string(k + 1) + ": " + e.what());
    }
    out.push_back(std::move(te));
  }
  return out;
}

ModelConfig model_config_for(const TrainConfig& cfg, std::span<const TrainExample> data, int stacks) {
  ModelConfig mc;
  mc.max_len = cfg.max_len;
  if (mc.max_len == 0)
    for (const auto& te : data) mc.max_len = std::max(mc.max_len, static_cast<int>(te.example.size()));
  mc.use_position = cfg.position;
  mc.input_dropout = cfg.dropout;
  mc.stacks = stacks;
  mc.mlp_dim = cfg.mlp_dim;
  LayerConfig lc;
  lc.heads = cfg.heads;
  lc.out_dim = cfg.hidden_dim;
  lc.activation = cfg.attention_activation;
  lc.use_edge_types = cfg.edge_types;
  lc.per_head_attention = cfg.per_head_attention;
  lc.dropout = cfg.dropout;
  mc.layers.assign(cfg.layers, lc);
  return mc;
}

// ---- optimization -------------------------------------------------------

Optimizer::Optimizer(OptimizerKind kind, double learning_rate) : kind_(kind), lr_(learning_rate) {}

void Optimizer::step(std::span<ad::Parameter* const> params) {
  if (kind_ == OptimizerKind::Sgd) {
    for (auto* p : params)
      for (std::size_t i = 0; i < p->value.numel(); ++i) p->value[i] -= lr_ * p->grad[i];
    return;
  }
  if (m_.empty()) {
    for (auto* p : params) {
      m_.emplace_back(p->value.rows(), p->value.cols());
      v_.emplace_back(p->value.rows(), p->value.cols());
    }
  }
  if (m_.size() != params.size()) throw Error("optimizer parameter list changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      const double g = p.grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      p.value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

double accumulate_gradients(ModelParams& params, std::span<const TrainExample* const> batch, double l2,
                            RunMode mode) {
  if (batch.empty()) return 0.0;
  const double weight = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const TrainExample* te : batch) {
    ad::Tape tape;
    ad::Var probs = model_forward(tape, te->example, te->graphs, params, mode);
    ad::Var l = loss(probs, te->example.label, te->example, params, l2);
    total += l.item();
    tape.backward(ad::scale(l, weight));
  }
  return total * weight;
}

double mean_loss(ModelParams& params, std::span<const TrainExample* const> batch, double l2) {
  if (batch.empty()) return 0.0;
  double total = 0.0;
  for (const TrainExample* te : batch) {
    ad::Tape tape;
    ad::Var probs = model_forward(tape, te->example, te->graphs, params, RunMode::eval());
    total += loss(probs, te->example.label, te->example, params, l2).item();
  }
  return total / static_cast<double>(batch.size());
}

std::vector<std::array<double, kNumClasses>> predict_all_probs(ModelParams& params,
                                                               std::span<const TrainExample> data) {
  std::vector<std::array<double, kNumClasses>> out;
  out.reserve(data.size());
  for (const auto& te : data) out.push_back(predict_probs(te.example, te.graphs, params));
  return out;
}

std::vector<int> predict(ModelParams& params, std::span<const TrainExample> data) {
  std::vector<int> out;
  out.reserve(data.size());
  for (const auto& probs : predict_all_probs(params, data)) out.push_back(argmax(probs));
  return out;
}

std::vector<int> gold_labels(std::span<const TrainExample> data) {
  std::vector<int> out;
  out.reserve(data.size());
  for (const auto& te : data) out.push_back(static_cast<int>(te.example.label));
  return out;
}

std::string to_jsonl(std::span<const EpochMetrics> history) {
  std::string out;
  for (const auto& h : history) {
    json j = json::object();
    j["epoch"] = h.epoch;
    j["train_loss"] = h.train_loss;
    j["dev_acc"] = h.dev_acc ? json(*h.dev_acc) : json(nullptr);
    j["dev_macro_f1"] = h.dev_macro_f1 ? json(*h.dev_macro_f1) : json(nullptr);
    out += j.dump();
    out += '\n';
  }
  return out;
}

TrainResult train(const TrainConfig& cfg, std::span<const AlignedParseSet> data,
                  std::optional<EmbeddingTable> file_embeddings) {
  cfg.validate();
  if (data.empty()) throw ValidationError("training set is empty");
  std::vector<TrainExample> examples = prepare_examples(data, cfg.graph_mode);
  const int stacks = static_cast<int>(examples.front().graphs.size());

  DevSplit split = split_dev(examples.size(), cfg.dev_fraction, derive_seed(cfg.seed, 2));
  std::vector<TrainExample> dev;
  for (std::size_t i : split.dev) dev.push_back(examples[i]);

  Rng init_rng(derive_seed(cfg.seed, 1));
  EmbeddingTable embeddings;
  if (file_embeddings) {
    embeddings = std::move(*file_embeddings);
  } else {
    std::set<std::string> vocab;
    for (const auto& te : examples) vocab.insert(te.example.tokens.begin(), te.example.tokens.end());
    embeddings = EmbeddingTable::trainable({vocab.begin(), vocab.end()}, cfg.embed_dim, init_rng);
  }
  ModelParams params = init_model(model_config_for(cfg, examples, stacks), std::move(embeddings), init_rng);

  TrainResult result{params, {}, 0, split};
  if (cfg.epochs == 0) return result;

  Rng shuffle_rng(derive_seed(cfg.seed, 3));
  Rng dropout_rng(derive_seed(cfg.seed, 4));
  Optimizer optimizer(cfg.optimizer, cfg.learning_rate);
  auto trainable = params.trainable_parameters();
  const std::vector<int> dev_golds = gold_labels(dev);
  std::optional<double> best_acc;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = split.train;
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const TrainExample*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&examples[order[i]]);
      for (auto* p : trainable) p->zero_grad();
      const double batch_loss =
          accumulate_gradients(params, batch, cfg.l2, RunMode::training(dropout_rng));
      if (!std::isfinite(batch_loss)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", batch " << start / cfg.batch_size + 1
            << "; lower learning_rate (currently " << cfg.learning_rate << ")";
        throw TrainingError(msg.str());
      }
      loss_sum += batch_loss * static_cast<double>(batch.size());
      optimizer.step(trainable);
    }
    for (auto* p : trainable) p->zero_grad();

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = order.empty() ? 0.0 : loss_sum / static_cast<double>(order.size());
    if (!dev.empty()) {
      const auto preds = predict(params, dev);
      m.dev_acc = accuracy(preds, dev_golds);
      m.dev_macro_f1 = macro_f1(preds, dev_golds);
    }
    result.history.push_back(m);

    const bool better = dev.empty() || !best_acc || *m.dev_acc > *best_acc;
    if (better) {
      if (m.dev_acc) best_acc = m.dev_acc;
      result.params = params;
      result.best_epoch = epoch;
    }
  }
  return result;
}

}  // namespace graphmerge
