#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "graphmerge/eval.hpp"
#include "graphmerge/graph.hpp"
#include "graphmerge/ingest.hpp"
#include "graphmerge/model.hpp"
#include "graphmerge/rgat.hpp"

namespace graphmerge {

// Which graph(s) the model sees for each sentence.
//   merge            union of all parses (one stack)
//   intersect        head links shared by all parses (one stack)
//   single:<id>      one parser's tree (one stack)
//   feature          one tree per parser, one stack each, features concatenated
struct GraphMode {
  enum class Kind { Merge, Intersect, Single, Feature };
  Kind kind = Kind::Merge;
  std::string parser_id;

  static GraphMode parse(std::string_view text);
  std::string str() const;
  bool operator==(const GraphMode&) const = default;
};

std::vector<TypedGraph> build_graphs(const AlignedParseSet& set, const GraphMode& mode);

enum class OptimizerKind { Adam, Sgd };

struct TrainConfig {
  double learning_rate = 1e-3;  // 1e-5 suits pre-computed contextual vectors
  int batch_size = 4;
  int epochs = 5;
  int hidden_dim = 64;  // {64, 128, 256}
  int heads = 4;        // {4, 8}
  int layers = 2;       // {2, 3, 4}
  double dropout = 0.1; // [0.1, 0.3]
  double l2 = 1e-6;
  std::uint64_t seed = 1;
  double dev_fraction = 0.05;
  GraphMode graph_mode;
  bool edge_types = true;
  bool position = true;
  int embed_dim = 64;  // trainable embeddings only
  int max_len = 0;     // 0: longest sentence in the training data
  int mlp_dim = 0;     // 0: hidden_dim
  AttentionActivation attention_activation = AttentionActivation::Relu;
  bool per_head_attention = false;
  OptimizerKind optimizer = OptimizerKind::Adam;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
// Sets one key from a JSON value. Returns false for keys TrainConfig does not
// own; throws ValidationError for bad values.
bool apply_setting(TrainConfig& cfg, const std::string& key, const nlohmann::json& value);

struct DevSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> dev;
};

// |dev| = round(fraction * n), at least 1 when n >= 1 and fraction > 0, at
// most n - 1 when n >= 2. Both index lists are ascending.
DevSplit split_dev(std::size_t n, double fraction, std::uint64_t seed);

struct TrainExample {
  LabeledExample example;
  std::vector<EdgeIndex> graphs;
};

std::vector<TrainExample> prepare_examples(std::span<const AlignedParseSet> data, const GraphMode& mode);

ModelConfig model_config_for(const TrainConfig& cfg, std::span<const TrainExample> data, int stacks);

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate);
  void step(std::span<ad::Parameter* const> params);

 private:
  OptimizerKind kind_;
  double lr_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long long t_ = 0;
  std::vector<ad::Tensor> m_;
  std::vector<ad::Tensor> v_;
};

// Mean loss of the batch; gradients (of that mean) are added to the
// parameters' accumulators.
double accumulate_gradients(ModelParams& params, std::span<const TrainExample* const> batch, double l2,
                            RunMode mode);

// Mean loss without gradients or dropout.
double mean_loss(ModelParams& params, std::span<const TrainExample* const> batch, double l2);

std::vector<int> predict(ModelParams& params, std::span<const TrainExample> data);
std::vector<std::array<double, kNumClasses>> predict_all_probs(ModelParams& params,
                                                               std::span<const TrainExample> data);
std::vector<int> gold_labels(std::span<const TrainExample> data);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> dev_acc;
  std::optional<double> dev_macro_f1;
};

std::string to_jsonl(std::span<const EpochMetrics> history);

struct TrainResult {
  ModelParams params;
  std::vector<EpochMetrics> history;
  int best_epoch = 0;  // 0: initialization returned
  DevSplit split;
};

// Mini-batch training with dev-accuracy model selection (ties keep the
// earlier epoch; with an empty dev set the last epoch is kept). Throws
// TrainingError on a non-finite loss.
TrainResult train(const TrainConfig& cfg, std::span<const AlignedParseSet> data,
                  std::optional<EmbeddingTable> file_embeddings = std::nullopt);

}  // namespace graphmerge
