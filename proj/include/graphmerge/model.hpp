#pragma once

#include <array>
#include <filesystem>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "graphmerge/autodiff.hpp"
#include "graphmerge/ingest.hpp"
#include "graphmerge/rgat.hpp"

namespace graphmerge {

class Rng;

enum class EmbeddingMode { File, Trainable };

// Token -> vector lookup feeding the first attention layer.
//  - Trainable: vocabulary plus an "<unk>" row, learned with the model.
//  - File: frozen vectors read from disk; an unknown token is an error unless
//    the file provides an "<unk>" row.
class EmbeddingTable {
 public:
  static constexpr const char* kUnknown = "<unk>";

  EmbeddingTable() = default;
  static EmbeddingTable trainable(std::vector<std::string> vocab, int dim, Rng& rng);
  // Format: first line "count dim", then "token v1 ... v_dim" per line.
  static EmbeddingTable read(std::istream& in);
  static EmbeddingTable load(const std::filesystem::path& path);
  static EmbeddingTable from_parts(EmbeddingMode mode, std::vector<std::string> vocab, ad::Tensor table);

  EmbeddingMode mode() const { return mode_; }
  bool trainable() const { return mode_ == EmbeddingMode::Trainable; }
  int dim() const { return static_cast<int>(table_.value.cols()); }
  const std::vector<std::string>& vocab() const { return vocab_; }
  std::optional<int> find(const std::string& token) const;
  // Row ids for a sentence; throws ValidationError on unresolvable tokens.
  std::vector<int> lookup(std::span<const std::string> tokens) const;

  ad::Parameter& table() { return table_; }
  const ad::Parameter& table() const { return table_; }

 private:
  void index_vocab();

  EmbeddingMode mode_ = EmbeddingMode::Trainable;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> index_;
  std::optional<int> unk_;
  ad::Parameter table_;
};

// Architecture. `stacks` > 1 gives the feature-ensemble variant: one
// attention stack per parse, pooled outputs concatenated before the MLP.
struct ModelConfig {
  int max_len = 0;
  bool use_position = true;
  double input_dropout = 0.0;
  std::vector<LayerConfig> layers;
  int stacks = 1;
  int mlp_dim = 0;  // 0 = same as the last layer width

  int stack_width() const;
  int resolved_mlp_dim() const { return mlp_dim > 0 ? mlp_dim : stack_width(); }
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct ModelParams {
  ModelConfig config;
  EmbeddingTable embeddings;
  ad::Parameter positions;        // [max_len x d_B]
  std::vector<RgatStack> stacks;  // config.stacks entries
  ad::Parameter w1;               // [d_out x stacks*d_h]
  ad::Parameter w2;               // [C x d_out]

  int input_dim() const { return embeddings.dim(); }
  // Parameters updated by the optimizer (frozen embeddings and a disabled
  // position table are excluded).
  std::vector<ad::Parameter*> trainable_parameters();
  // Everything that goes into a checkpoint.
  std::vector<ad::Parameter*> all_parameters();
  std::vector<const ad::Parameter*> all_parameters() const;
  std::size_t trainable_parameter_count() const;
};

ModelParams init_model(const ModelConfig& cfg, EmbeddingTable embeddings, Rng& rng);

// Provider row plus position row for each token; input dropout when training.
ad::Var embed(ad::Tape& tape, const LabeledExample& ex, ModelParams& params, RunMode mode);

// Mean of the rows covering the 1-based aspect span -> [1 x d].
ad::Var aspect_pool(ad::Var h, int aspect_start, int aspect_len);

// softmax(W2 ReLU(W1 h_t)) -> [1 x C]
ad::Var classify(ad::Var h_t, ad::Var w1, ad::Var w2);

// embed -> attention stack -> aspect pooling -> classify.
ad::Var forward(ad::Tape& tape, const LabeledExample& ex, const EdgeIndex& graph, ModelParams& params,
                RunMode mode);

// One graph per stack; pooled stack outputs are concatenated.
ad::Var feature_ensemble_forward(ad::Tape& tape, const LabeledExample& ex,
                                 std::span<const EdgeIndex> graphs, ModelParams& params, RunMode mode);

// Dispatches on params.config.stacks.
ad::Var model_forward(ad::Tape& tape, const LabeledExample& ex, std::span<const EdgeIndex> graphs,
                      ModelParams& params, RunMode mode);

// -log probs[label] + l2 * (sum of squared trainable entries). Token
// embedding rows count only for tokens of `ex`.
ad::Var loss(ad::Var probs, Sentiment label, const LabeledExample& ex, ModelParams& params, double l2);

std::array<double, kNumClasses> predict_probs(const LabeledExample& ex, std::span<const EdgeIndex> graphs,
                                              ModelParams& params);
int argmax(std::span<const double> probs);

// Binary checkpoint:
//   "GMCKPT01"            8-byte magic
//   u32 version (= 1)
//   u64 n, then n bytes   JSON header {"model", "embedding_mode", "vocab", "meta"}
//   u32 count, then per array:
//     u32 len + name bytes, u32 rank (= 2), u64 dims[rank], f64 data (row-major)
// All integers and floats little-endian.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const nlohmann::json& meta = nlohmann::json::object());

struct Checkpoint {
  ModelParams params;
  nlohmann::json meta;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace graphmerge
