#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "graphmerge/error.hpp"
#include "graphmerge/eval.hpp"
#include "graphmerge/graph.hpp"
#include "graphmerge/ingest.hpp"
#include "graphmerge/model.hpp"
#include "graphmerge/report.hpp"
#include "graphmerge/rng.hpp"
#include "graphmerge/synth.hpp"
#include "graphmerge/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace graphmerge;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

std::vector<ParseSource> parse_sources(const std::vector<std::string>& specs) {
  std::vector<ParseSource> out;
  for (const auto& s : specs) out.push_back(parse_source_entry(s));
  if (out.empty()) throw ValidationError("--parses needs at least one file");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

// Writes to `path`, or to stdout when the path is empty.
void emit_json(const json& j, const std::string& path) {
  const std::string text = j.dump(2) + "\n";
  if (path.empty())
    std::cout << text;
  else
    write_text(path, text);
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

// ---- merge --------------------------------------------------------------

struct MergeArgs {
  std::string dataset;
  std::vector<std::string> parses;
  std::string mode = "union";
  std::string dot_dir;
  std::string stats;
};

int run_merge(const MergeArgs& a) {
  const auto corpus = load_corpus(a.dataset, parse_sources(a.parses));
  if (!a.dot_dir.empty()) fs::create_directories(a.dot_dir);
  json sentences = json::array();
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    const auto& parses = corpus[k].parses;
    const TypedGraph g = a.mode == "union" ? graph_merge(std::span<const DepParse>(parses)) : graph_intersect(parses);
    json entry = to_json(graph_stats(g));
    entry["index"] = k + 1;
    sentences.push_back(std::move(entry));
    if (!a.dot_dir.empty())
      write_text(fs::path(a.dot_dir) / ("sentence_" + std::to_string(k + 1) + ".dot"),
                 export_dot(g, corpus[k].example.tokens));
  }
  emit_json({{"mode", a.mode}, {"sentences", sentences}}, a.stats);
  return 0;
}

// ---- train --------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

struct TrainJob {
  TrainConfig cfg;
  fs::path dataset;
  std::vector<std::string> parses;
  fs::path embeddings;
  fs::path checkpoint = "model.ckpt";
  fs::path metrics = "metrics.jsonl";
};

// Path-valued keys from the config file resolve against the file's directory.
void apply_job_key(TrainJob& job, const std::string& key, const json& value, const fs::path& base) {
  auto as_path = [&](const json& v) {
    if (!v.is_string()) throw ValidationError("config key \"" + key + "\" must be a string");
    fs::path p = v.get<std::string>();
    return p.is_absolute() ? p : base / p;
  };
  if (key == "dataset") {
    job.dataset = as_path(value);
  } else if (key == "parses") {
    std::vector<std::string> items;
    if (value.is_string()) {
      std::stringstream ss(value.get<std::string>());
      for (std::string item; std::getline(ss, item, ',');) items.push_back(item);
    } else if (value.is_array()) {
      for (const auto& v : value) {
        if (!v.is_string()) throw ValidationError("config key \"parses\" must hold strings");
        items.push_back(v.get<std::string>());
      }
    } else {
      throw ValidationError("config key \"parses\" must be a string or an array of strings");
    }
    job.parses.clear();
    for (const auto& item : items) {
      ParseSource src = parse_source_entry(item);
      if (!src.path.is_absolute()) src.path = base / src.path;
      job.parses.push_back(src.parser_id + "=" + src.path.string());
    }
  } else if (key == "embeddings") {
    job.embeddings = as_path(value);
  } else if (key == "checkpoint") {
    job.checkpoint = as_path(value);
  } else if (key == "metrics") {
    job.metrics = as_path(value);
  } else if (!apply_setting(job.cfg, key, value)) {
    throw ValidationError("unknown config key \"" + key + "\"");
  }
}

int run_train(const TrainArgs& a) {
  TrainJob job;
  const fs::path config_path = a.config;
  const json file = read_json_file(config_path);
  if (!file.is_object()) throw ValidationError(config_path.string() + ": config must be a JSON object");
  const fs::path base = config_path.parent_path();
  for (const auto& [key, value] : file.items()) {
    try {
      apply_job_key(job, key, value, base);
    } catch (const ValidationError& e) {
      throw ValidationError(config_path.string() + ": " + e.what());
    }
  }
  for (const auto& ov : a.overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) throw ValidationError("--override expects key=value, got \"" + ov + "\"");
    const std::string key = ov.substr(0, eq);
    const std::string text = ov.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    apply_job_key(job, key, value, fs::path{});
  }
  if (a.seed) job.cfg.seed = *a.seed;
  if (job.dataset.empty()) throw ValidationError("config needs \"dataset\"");
  if (job.parses.empty()) throw ValidationError("config needs \"parses\"");

  const auto corpus = load_corpus(job.dataset, parse_sources(job.parses));
  std::optional<EmbeddingTable> embeddings;
  if (!job.embeddings.empty()) embeddings = EmbeddingTable::load(job.embeddings);
  const TrainResult result = train(job.cfg, corpus, std::move(embeddings));

  std::optional<double> best_dev;
  for (const auto& h : result.history)
    if (h.epoch == result.best_epoch) best_dev = h.dev_acc;
  json parser_ids = json::array();
  for (const auto& p : corpus.front().parses) parser_ids.push_back(p.parser_id);
  const json meta = {{"train_config", to_json(job.cfg)},
                     {"best_epoch", result.best_epoch},
                     {"best_dev_acc", best_dev ? json(*best_dev) : json(nullptr)},
                     {"parsers", parser_ids}};
  if (!job.checkpoint.parent_path().empty()) fs::create_directories(job.checkpoint.parent_path());
  if (!job.metrics.parent_path().empty()) fs::create_directories(job.metrics.parent_path());
  save_checkpoint(job.checkpoint, result.params, meta);
  write_text(job.metrics, to_jsonl(result.history));

  emit_json({{"checkpoint", job.checkpoint.string()},
             {"metrics", job.metrics.string()},
             {"epochs", result.history.size()},
             {"best_epoch", result.best_epoch},
             {"best_dev_acc", best_dev ? json(*best_dev) : json(nullptr)},
             {"train_examples", result.split.train.size()},
             {"dev_examples", result.split.dev.size()}},
            "");
  return 0;
}

// ---- eval ---------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::vector<std::string> ensemble;
  std::string dataset;
  std::vector<std::string> parses;
  std::string report;
  std::string split = "all";
  std::string predictions_out;
  bool ars = false;
};

TrainConfig stored_config(const Checkpoint& ck, const std::string& path) {
  TrainConfig cfg;
  if (!ck.meta.contains("train_config")) return cfg;
  for (const auto& [key, value] : ck.meta["train_config"].items())
    if (!apply_setting(cfg, key, value)) throw ValidationError(path + ": unknown stored config key \"" + key + "\"");
  return cfg;
}

// Groups by group_id in dataset order; the first member of a group is its
// source. Examples without a group id are units of their own.
std::vector<ArsGroup> ars_groups(std::span<const AlignedParseSet> data, std::span<const int> preds) {
  std::vector<ArsGroup> groups;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const bool correct = preds[i] == static_cast<int>(data[i].example.label);
    const auto& gid = data[i].example.group_id;
    if (gid) {
      auto [it, fresh] = index.emplace(*gid, groups.size());
      if (!fresh) {
        groups[it->second].variants_correct.push_back(correct);
        continue;
      }
    }
    groups.push_back({correct, {}});
  }
  return groups;
}

int run_eval(const EvalArgs& a) {
  std::vector<std::string> paths = a.ensemble;
  if (!a.checkpoint.empty()) paths.insert(paths.begin(), a.checkpoint);
  if (paths.empty()) throw ValidationError("eval needs --checkpoint or --label-ensemble");
  auto corpus = load_corpus(a.dataset, parse_sources(a.parses));

  std::vector<Checkpoint> checkpoints;
  for (const auto& p : paths) checkpoints.push_back(load_checkpoint(p));

  if (a.split != "all") {
    const TrainConfig cfg = stored_config(checkpoints.front(), paths.front());
    const DevSplit split = split_dev(corpus.size(), cfg.dev_fraction, derive_seed(cfg.seed, 2));
    const auto& keep = a.split == "dev" ? split.dev : split.train;
    std::vector<AlignedParseSet> subset;
    for (std::size_t i : keep) subset.push_back(corpus[i]);
    corpus = std::move(subset);
  }
  if (corpus.empty()) throw ValidationError("no examples to evaluate");

  std::vector<std::vector<int>> pred_lists;
  std::vector<std::vector<std::array<double, kNumClasses>>> prob_lists;
  std::vector<int> golds;
  for (std::size_t c = 0; c < checkpoints.size(); ++c) {
    const TrainConfig cfg = stored_config(checkpoints[c], paths[c]);
    const auto examples = prepare_examples(corpus, cfg.graph_mode);
    if (golds.empty()) golds = gold_labels(examples);
    auto probs = predict_all_probs(checkpoints[c].params, examples);
    std::vector<int> preds;
    for (const auto& p : probs) preds.push_back(argmax(p));
    pred_lists.push_back(std::move(preds));
    prob_lists.push_back(std::move(probs));
  }
  const std::vector<int> preds = pred_lists.size() == 1 ? pred_lists.front() : label_ensemble(pred_lists, prob_lists);

  json report = to_json(evaluate_predictions(preds, golds));
  if (pred_lists.size() > 1) report["ensemble_size"] = pred_lists.size();
  if (a.ars) {
    const auto groups = ars_groups(corpus, preds);
    report["ars"] = ars_score(groups);
    report["units"] = groups.size();
  }
  if (!a.predictions_out.empty()) emit_json({{"predictions", preds}}, a.predictions_out);
  emit_json(report, a.report);
  return 0;
}

// ---- analyze-hops -------------------------------------------------------

struct HopsArgs {
  std::string dataset;
  std::vector<std::string> parses;
  std::string mode;
  std::string predictions;
  std::string out;
};

std::vector<int> read_predictions(const fs::path& path) {
  json j = read_json_file(path);
  if (j.is_object() && j.contains("predictions")) j = j["predictions"];
  if (!j.is_array()) throw ValidationError(path.string() + ": expected an array of predictions");
  std::vector<int> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& v = j[i];
    int label = -1;
    if (v.is_number_integer())
      label = v.get<int>();
    else if (v.is_string())
      label = static_cast<int>(parse_label(v.get<std::string>()));
    if (label < 0 || label >= kNumClasses)
      throw ValidationError(path.string() + ": prediction " + std::to_string(i + 1) + " is not a class");
    out.push_back(label);
  }
  return out;
}

int run_hops(const HopsArgs& a) {
  const GraphMode mode = GraphMode::parse(a.mode);
  if (mode.kind == GraphMode::Kind::Feature) throw ValidationError("analyze-hops needs a single-graph mode");
  const auto corpus = load_corpus(a.dataset, parse_sources(a.parses));
  std::optional<std::vector<int>> preds;
  if (!a.predictions.empty()) {
    preds = read_predictions(a.predictions);
    if (preds->size() != corpus.size())
      throw ValidationError(a.predictions + ": " + std::to_string(preds->size()) + " predictions for " +
                            std::to_string(corpus.size()) + " examples");
  }

  HopHistogram hist;
  std::vector<std::optional<int>> hops;
  std::vector<bool> correct;
  std::size_t skipped = 0;
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    const auto& ex = corpus[k].example;
    if (ex.opinion_spans.empty()) {
      ++skipped;
      continue;
    }
    const auto h = aspect_opinion_hops(ex, build_graphs(corpus[k], mode).front());
    if (h)
      ++hist.counts[*h];
    else
      ++hist.unreachable;
    hops.push_back(h);
    if (preds) correct.push_back((*preds)[k] == static_cast<int>(ex.label));
  }

  json out = to_json(hist);
  out["mode"] = mode.str();
  out["n"] = hops.size();
  out["skipped"] = skipped;
  if (preds) out["accuracy_by_hop"] = to_json(hop_bucket_accuracy(hops, correct));
  emit_json(out, a.out);
  return 0;
}

// ---- synth --------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::size_t n = 1000;
  double rewire = 0.2;
  int parsers = 3;
  std::uint64_t seed = 1;
  SynthConfig cfg;
};

int run_synth(SynthArgs a) {
  if (a.rewire < 0.0 || a.rewire > 1.0) throw ValidationError("--rewire must be in [0, 1]");
  if (a.parsers < 1) throw ValidationError("--parsers must be >= 1");
  a.cfg.n_examples = a.n;
  const SynthCorpus corpus = gen_dataset(a.cfg, a.seed);
  const auto parses = corrupt_corpus(corpus.gold, a.parsers, a.rewire, derive_seed(a.seed, 1));
  fs::create_directories(a.out);
  write_synth(a.out, corpus, parses);
  emit_json({{"out", a.out},
             {"examples", corpus.examples.size()},
             {"parsers", a.parsers},
             {"merged_edge_recall", merged_edge_recall(corpus.gold, parses)}},
            "");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GraphMerge: dependency-parse ensembling and graph attention sentiment classification"};
  app.require_subcommand(1);

  MergeArgs merge;
  auto* merge_cmd = app.add_subcommand("merge", "Build merged (or intersected) graphs and report statistics");
  merge_cmd->add_option("--dataset", merge.dataset, "Dataset JSONL")->required();
  merge_cmd->add_option("--parses", merge.parses, "Parse files, ID=PATH or PATH")->required()->delimiter(',');
  merge_cmd->add_option("--mode", merge.mode, "union or intersect")->check(CLI::IsMember({"union", "intersect"}));
  merge_cmd->add_option("--dot", merge.dot_dir, "Write one DOT file per sentence into this directory");
  merge_cmd->add_option("--stats", merge.stats, "Statistics JSON output (default stdout)");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint plus metrics JSONL");
  train_cmd->add_option("--config", train_args.config, "JSON config file")->required();
  train_cmd->add_option("--override", train_args.overrides, "key=value, applied after the config file");
  train_cmd->add_option("--seed", train_args.seed, "Seed (overrides the config)");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate one checkpoint or a label ensemble");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file");
  eval_cmd->add_option("--label-ensemble", eval_args.ensemble, "Checkpoints for majority voting")->delimiter(',');
  eval_cmd->add_option("--dataset", eval_args.dataset, "Dataset JSONL")->required();
  eval_cmd->add_option("--parses", eval_args.parses, "Parse files, ID=PATH or PATH")->required()->delimiter(',');
  eval_cmd->add_option("--report", eval_args.report, "Report JSON output (default stdout)");
  eval_cmd->add_option("--split", eval_args.split, "all, or the training run's dev/train part")
      ->check(CLI::IsMember({"all", "dev", "train"}));
  eval_cmd->add_option("--predictions-out", eval_args.predictions_out, "Write predicted class ids as JSON");
  eval_cmd->add_flag("--ars", eval_args.ars, "Add the grouped robustness score");

  HopsArgs hops_args;
  auto* hops_cmd = app.add_subcommand("analyze-hops", "Aspect-to-opinion hop histogram");
  hops_cmd->add_option("--dataset", hops_args.dataset, "Dataset JSONL")->required();
  hops_cmd->add_option("--parses", hops_args.parses, "Parse files, ID=PATH or PATH")->required()->delimiter(',');
  hops_cmd->add_option("--mode", hops_args.mode, "union|merge, intersect or single:ID")->required();
  hops_cmd->add_option("--predictions", hops_args.predictions, "Predictions JSON for per-hop accuracy");
  hops_cmd->add_option("--out", hops_args.out, "Output JSON (default stdout)");

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic corpus with corrupted parses");
  synth_cmd->add_option("--out", synth_args.out, "Output directory")->required();
  synth_cmd->add_option("--n", synth_args.n, "Number of examples")->capture_default_str();
  synth_cmd->add_option("--rewire", synth_args.rewire, "Per-token head rewiring probability")->capture_default_str();
  synth_cmd->add_option("--parsers", synth_args.parsers, "Number of corrupted parse files")->capture_default_str();
  synth_cmd->add_option("--seed", synth_args.seed, "Seed")->capture_default_str();
  synth_cmd->add_option("--min-len", synth_args.cfg.min_len, "Shortest sentence")->capture_default_str();
  synth_cmd->add_option("--max-len", synth_args.cfg.max_len, "Longest sentence")->capture_default_str();
  synth_cmd->add_option("--distractors", synth_args.cfg.distractors, "Distractor polarity words per sentence")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*merge_cmd) return run_merge(merge);
    if (*train_cmd) return run_train(train_args);
    if (*eval_cmd) return run_eval(eval_args);
    if (*hops_cmd) return run_hops(hops_args);
    if (*synth_cmd) return run_synth(synth_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
