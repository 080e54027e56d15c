#include "graphmerge/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "graphmerge/error.hpp"
#include "graphmerge/rng.hpp"

namespace graphmerge {

using nlohmann::json;

// ---- embeddings ---------------------------------------------------------

EmbeddingTable EmbeddingTable::trainable(std::vector<std::string> vocab, int dim, Rng& rng) {
  if (dim < 1) throw ValidationError("embedding dim must be >= 1");
  std::vector<std::string> words;
  words.push_back(kUnknown);
  std::set<std::string> seen{kUnknown};
  for (auto& w : vocab)
    if (seen.insert(w).second) words.push_back(std::move(w));
  const double limit = std::sqrt(6.0 / static_cast<double>(words.size() + dim));
  ad::Tensor table(words.size(), dim);
  for (double& v : table.data()) v = rng.uniform(-limit, limit);
  return from_parts(EmbeddingMode::Trainable, std::move(words), std::move(table));
}

EmbeddingTable EmbeddingTable::read(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError("empty embedding file", 1);
  std::istringstream header(line);
  long long count = -1, dim = -1;
  if (!(header >> count >> dim) || count < 0 || dim < 1)
    throw ParseError("header must be \"count dim\"", 1);
  std::vector<std::string> vocab;
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(count * dim));
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream row(line);
    std::string token;
    row >> token;
    for (long long k = 0; k < dim; ++k) {
      double v;
      if (!(row >> v)) throw ParseError("expected " + std::to_string(dim) + " values", line_no);
      data.push_back(v);
    }
    std::string extra;
    if (row >> extra) throw ParseError("more than " + std::to_string(dim) + " values", line_no);
    vocab.push_back(std::move(token));
  }
  if (static_cast<long long>(vocab.size()) != count)
    throw ParseError("header promises " + std::to_string(count) + " rows, found " +
                         std::to_string(vocab.size()),
                     0);
  const std::size_t rows = vocab.size();
  return from_parts(EmbeddingMode::File, std::move(vocab),
                    ad::Tensor(rows, static_cast<std::size_t>(dim), std::move(data)));
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return read(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

EmbeddingTable EmbeddingTable::from_parts(EmbeddingMode mode, std::vector<std::string> vocab,
                                          ad::Tensor table) {
  if (table.rows() != vocab.size()) throw ShapeError("embedding rows differ from vocabulary size");
  EmbeddingTable t;
  t.mode_ = mode;
  t.vocab_ = std::move(vocab);
  t.table_ = ad::Parameter("embeddings", std::move(table));
  t.index_vocab();
  if (mode == EmbeddingMode::Trainable && !t.unk_)
    throw ValidationError("trainable embeddings need an <unk> row");
  return t;
}

void EmbeddingTable::index_vocab() {
  index_.clear();
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (!index_.emplace(vocab_[i], static_cast<int>(i)).second)
      throw ValidationError("duplicate embedding token \"" + vocab_[i] + "\"");
  }
  unk_ = find(kUnknown);
}

std::optional<int> EmbeddingTable::find(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<int> EmbeddingTable::lookup(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& tok : tokens) {
    auto id = find(tok);
    if (!id) id = unk_;
    if (!id) throw ValidationError("token \"" + tok + "\" has no embedding and no <unk> row is present");
    ids.push_back(*id);
  }
  return ids;
}

// ---- config -------------------------------------------------------------

int ModelConfig::stack_width() const {
  if (layers.empty()) throw ValidationError("model needs at least one attention layer");
  return layers.back().out_dim;
}

void ModelConfig::validate() const {
  if (max_len < 1) throw ValidationError("max_len must be >= 1");
  if (stacks < 1) throw ValidationError("stacks must be >= 1");
  if (input_dropout < 0.0 || input_dropout >= 1.0) throw ValidationError("input dropout must be in [0, 1)");
  if (layers.empty()) throw ValidationError("model needs at least one attention layer");
  for (const auto& l : layers) l.validate();
  if (mlp_dim < 0) throw ValidationError("mlp_dim must be >= 0");
}

json to_json(const ModelConfig& cfg) {
  json layers = json::array();
  for (const auto& l : cfg.layers) {
    layers.push_back({{"heads", l.heads},
                      {"out_dim", l.out_dim},
                      {"activation", l.activation == AttentionActivation::Relu ? "relu" : "leaky_relu"},
                      {"leaky_slope", l.leaky_slope},
                      {"use_edge_types", l.use_edge_types},
                      {"per_head_attention", l.per_head_attention},
                      {"dropout", l.dropout}});
  }
  return {{"max_len", cfg.max_len},       {"use_position", cfg.use_position},
          {"input_dropout", cfg.input_dropout}, {"layers", layers},
          {"stacks", cfg.stacks},         {"mlp_dim", cfg.mlp_dim}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.max_len = j.at("max_len").get<int>();
  cfg.use_position = j.at("use_position").get<bool>();
  cfg.input_dropout = j.at("input_dropout").get<double>();
  cfg.stacks = j.at("stacks").get<int>();
  cfg.mlp_dim = j.at("mlp_dim").get<int>();
  for (const auto& l : j.at("layers")) {
    LayerConfig lc;
    lc.heads = l.at("heads").get<int>();
    lc.out_dim = l.at("out_dim").get<int>();
    lc.activation = l.at("activation").get<std::string>() == "relu" ? AttentionActivation::Relu
                                                                     : AttentionActivation::LeakyRelu;
    lc.leaky_slope = l.at("leaky_slope").get<double>();
    lc.use_edge_types = l.at("use_edge_types").get<bool>();
    lc.per_head_attention = l.at("per_head_attention").get<bool>();
    lc.dropout = l.at("dropout").get<double>();
    cfg.layers.push_back(lc);
  }
  return cfg;
}

// ---- params -------------------------------------------------------------

std::vector<ad::Parameter*> ModelParams::trainable_parameters() {
  std::vector<ad::Parameter*> out;
  if (embeddings.trainable()) out.push_back(&embeddings.table());
  if (config.use_position) out.push_back(&positions);
  for (auto& stack : stacks)
    for (auto& layer : stack)
      for (auto* p : layer.params.parameters()) out.push_back(p);
  out.push_back(&w1);
  out.push_back(&w2);
  return out;
}

std::vector<ad::Parameter*> ModelParams::all_parameters() {
  std::vector<ad::Parameter*> out{&embeddings.table(), &positions};
  for (auto& stack : stacks)
    for (auto& layer : stack)
      for (auto* p : layer.params.parameters()) out.push_back(p);
  out.push_back(&w1);
  out.push_back(&w2);
  return out;
}

std::vector<const ad::Parameter*> ModelParams::all_parameters() const {
  auto ptrs = const_cast<ModelParams*>(this)->all_parameters();
  return {ptrs.begin(), ptrs.end()};
}

std::size_t ModelParams::trainable_parameter_count() const {
  std::size_t n = 0;
  for (auto* p : const_cast<ModelParams*>(this)->trainable_parameters()) n += p->size();
  return n;
}

namespace {

ModelParams assemble(const ModelConfig& cfg, EmbeddingTable embeddings, Rng* rng) {
  cfg.validate();
  ModelParams m;
  m.config = cfg;
  m.embeddings = std::move(embeddings);
  const std::size_t d_b = m.embeddings.dim();
  const std::size_t d_h = cfg.stack_width();
  const std::size_t d_out = cfg.resolved_mlp_dim();
  const std::size_t pooled = d_h * cfg.stacks;
  auto mat = [&](std::size_t r, std::size_t c) {
    ad::Tensor t(r, c);
    if (rng) {
      const double limit = std::sqrt(6.0 / static_cast<double>(r + c));
      for (double& v : t.data()) v = rng->uniform(-limit, limit);
    }
    return t;
  };
  m.positions = ad::Parameter("positions", mat(cfg.max_len, d_b));
  for (int s = 0; s < cfg.stacks; ++s) {
    const std::string prefix = "stack" + std::to_string(s) + ".";
    if (rng) {
      m.stacks.push_back(init_stack(static_cast<int>(d_b), cfg.layers, *rng, prefix));
    } else {
      RgatStack stack;
      int d = static_cast<int>(d_b);
      for (std::size_t l = 0; l < cfg.layers.size(); ++l) {
        stack.push_back({RgatLayerParams::zeros(d, cfg.layers[l], prefix + "layer" + std::to_string(l) + "."),
                         cfg.layers[l]});
        d = cfg.layers[l].out_dim;
      }
      m.stacks.push_back(std::move(stack));
    }
  }
  m.w1 = ad::Parameter("W1", mat(d_out, pooled));
  m.w2 = ad::Parameter("W2", mat(kNumClasses, d_out));
  return m;
}

}  // namespace

ModelParams init_model(const ModelConfig& cfg, EmbeddingTable embeddings, Rng& rng) {
  return assemble(cfg, std::move(embeddings), &rng);
}

// ---- forward ------------------------------------------------------------

ad::Var embed(ad::Tape& tape, const LabeledExample& ex, ModelParams& params, RunMode mode) {
  const std::size_t n = ex.size();
  if (n > static_cast<std::size_t>(params.config.max_len))
    throw ValidationError("sentence of " + std::to_string(n) + " tokens exceeds max_len " +
                          std::to_string(params.config.max_len));
  const std::vector<int> ids = params.embeddings.lookup(ex.tokens);
  ad::Var x;
  if (params.embeddings.trainable()) {
    x = ad::gather_rows(tape.param(params.embeddings.table()), ids);
  } else {
    const ad::Tensor& table = params.embeddings.table().value;
    ad::Tensor rows(n, table.cols());
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(table.row_span(ids[i]).begin(), table.cols(), rows.row_span(i).begin());
    x = tape.constant(std::move(rows));
  }
  if (params.config.use_position) {
    std::vector<int> pos(n);
    for (std::size_t i = 0; i < n; ++i) pos[i] = static_cast<int>(i);
    x = ad::add(x, ad::gather_rows(tape.param(params.positions), pos));
  }
  if (mode.train && params.config.input_dropout > 0.0) {
    if (!mode.rng) throw Error("training mode without an rng");
    x = ad::dropout(x, params.config.input_dropout, *mode.rng, true);
  }
  return x;
}

ad::Var aspect_pool(ad::Var h, int aspect_start, int aspect_len) {
  if (aspect_len < 1 || aspect_start < 1 || static_cast<std::size_t>(aspect_start + aspect_len - 1) > h.rows())
    throw ValidationError("aspect span out of bounds");
  std::vector<int> rows(aspect_len);
  for (int k = 0; k < aspect_len; ++k) rows[k] = aspect_start - 1 + k;
  std::vector<int> seg(aspect_len, 0);
  return ad::segment_mean(ad::gather_rows(h, rows), seg, 1);
}

ad::Var classify(ad::Var h_t, ad::Var w1, ad::Var w2) {
  ad::Var hidden = ad::relu(ad::matmul_t(h_t, w1));
  ad::Var logits = ad::matmul_t(hidden, w2);  // [1 x C]
  std::vector<int> seg(logits.value().numel(), 0);
  return ad::segment_softmax(logits, seg);
}

ad::Var forward(ad::Tape& tape, const LabeledExample& ex, const EdgeIndex& graph, ModelParams& params,
                RunMode mode) {
  return feature_ensemble_forward(tape, ex, std::span<const EdgeIndex>(&graph, 1), params, mode);
}

ad::Var feature_ensemble_forward(ad::Tape& tape, const LabeledExample& ex,
                                 std::span<const EdgeIndex> graphs, ModelParams& params, RunMode mode) {
  if (graphs.size() != params.stacks.size())
    throw ValidationError(std::to_string(graphs.size()) + " graphs supplied for " +
                          std::to_string(params.stacks.size()) + " attention stacks");
  for (const auto& g : graphs)
    if (static_cast<std::size_t>(g.n) != ex.size())
      throw ValidationError("graph has " + std::to_string(g.n) + " nodes for " + std::to_string(ex.size()) +
                            " tokens");
  ad::Var x = embed(tape, ex, params, mode);
  std::vector<ad::Var> pooled;
  for (std::size_t m = 0; m < graphs.size(); ++m) {
    ad::Var h = stack_forward(x, graphs[m], params.stacks[m], mode);
    pooled.push_back(aspect_pool(h, ex.aspect_start, ex.aspect_len));
  }
  ad::Var h_t = pooled.size() == 1 ? pooled.front() : ad::concat(pooled, 1);
  return classify(h_t, tape.param(params.w1), tape.param(params.w2));
}

ad::Var model_forward(ad::Tape& tape, const LabeledExample& ex, std::span<const EdgeIndex> graphs,
                      ModelParams& params, RunMode mode) {
  return feature_ensemble_forward(tape, ex, graphs, params, mode);
}

ad::Var loss(ad::Var probs, Sentiment label, const LabeledExample& ex, ModelParams& params, double l2) {
  ad::Var total = ad::cross_entropy(probs, static_cast<int>(label));
  if (l2 == 0.0) return total;
  ad::Tape& tape = probs.tape();
  std::vector<ad::Var> terms;
  for (ad::Parameter* p : params.trainable_parameters()) {
    if (p == &params.embeddings.table()) {
      auto ids = params.embeddings.lookup(ex.tokens);
      std::sort(ids.begin(), ids.end());
      ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
      terms.push_back(ad::sum_squares(ad::gather_rows(tape.param(*p), ids)));
    } else {
      terms.push_back(ad::sum_squares(tape.param(*p)));
    }
  }
  ad::Var reg = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) reg = ad::add(reg, terms[i]);
  return ad::add(total, ad::scale(reg, l2));
}

std::array<double, kNumClasses> predict_probs(const LabeledExample& ex, std::span<const EdgeIndex> graphs,
                                              ModelParams& params) {
  ad::Tape tape;
  ad::Var probs = model_forward(tape, ex, graphs, params, RunMode::eval());
  std::array<double, kNumClasses> out{};
  for (int c = 0; c < kNumClasses; ++c) out[c] = probs.value()[c];
  return out;
}

int argmax(std::span<const double> probs) {
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

// ---- checkpoint ---------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'G', 'M', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.put(static_cast<char>((value >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(std::istream& in) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    int c = in.get();
    if (c == EOF) throw ParseError("truncated checkpoint", 0);
    value |= static_cast<T>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return value;
}

void put_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_le<std::uint64_t>(in)); }

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const json& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  json header{{"model", to_json(params.config)},
              {"embedding_mode", params.embeddings.trainable() ? "trainable" : "file"},
              {"vocab", params.embeddings.vocab()},
              {"meta", meta}};
  const std::string text = header.dump();
  out.write(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  auto arrays = params.all_parameters();
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(arrays.size()));
  for (const ad::Parameter* p : arrays) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put_le<std::uint32_t>(out, 2);
    put_le<std::uint64_t>(out, p->value.rows());
    put_le<std::uint64_t>(out, p->value.cols());
    for (double v : p->value.data()) put_f64(out, v);
  }
  if (!out) throw Error("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  try {
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw ParseError("not a checkpoint file", 0);
    const auto version = get_le<std::uint32_t>(in);
    if (version != kVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version), 0);
    const auto header_len = get_le<std::uint64_t>(in);
    std::string text(header_len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw ParseError("truncated checkpoint header", 0);
    json header = json::parse(text);

    ModelConfig cfg = model_config_from_json(header.at("model"));
    const EmbeddingMode mode =
        header.at("embedding_mode").get<std::string>() == "file" ? EmbeddingMode::File : EmbeddingMode::Trainable;
    auto vocab = header.at("vocab").get<std::vector<std::string>>();

    std::unordered_map<std::string, ad::Tensor> arrays;
    const auto count = get_le<std::uint32_t>(in);
    for (std::uint32_t k = 0; k < count; ++k) {
      const auto name_len = get_le<std::uint32_t>(in);
      std::string name(name_len, '\0');
      in.read(name.data(), name_len);
      const auto rank = get_le<std::uint32_t>(in);
      if (rank != 2) throw ParseError("array " + name + " has rank " + std::to_string(rank), 0);
      const auto rows = get_le<std::uint64_t>(in);
      const auto cols = get_le<std::uint64_t>(in);
      std::vector<double> data(rows * cols);
      for (double& v : data) v = get_f64(in);
      arrays.emplace(name, ad::Tensor(rows, cols, std::move(data)));
    }
    auto emb = arrays.find("embeddings");
    if (emb == arrays.end()) throw ParseError("checkpoint lacks embeddings", 0);
    Checkpoint ck{assemble(cfg, EmbeddingTable::from_parts(mode, std::move(vocab), emb->second), nullptr),
                  header.value("meta", json::object())};
    for (ad::Parameter* p : ck.params.all_parameters()) {
      auto it = arrays.find(p->name);
      if (it == arrays.end()) throw ParseError("checkpoint lacks array " + p->name, 0);
      if (!it->second.same_shape(p->value))
        throw ParseError("array " + p->name + " has shape " + shape_str(it->second) + ", expected " +
                             shape_str(p->value),
                         0);
      p->value = it->second;
      p->grad = ad::Tensor(p->value.rows(), p->value.cols());
    }
    return ck;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": bad checkpoint header: " + e.what(), 0);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

}  // namespace graphmerge
