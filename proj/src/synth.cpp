#include "graphmerge/synth.hpp"

#include <algorithm>
#include <deque>
#include <fstream>

#include "graphmerge/error.hpp"
#include "graphmerge/graph.hpp"
#include "graphmerge/rng.hpp"

namespace graphmerge {

namespace {

constexpr const char* kClassPrefix[kNumClasses] = {"pos", "neu", "neg"};

std::vector<int> distances_from(int start, const std::vector<std::vector<int>>& adj) {
  std::vector<int> dist(adj.size(), -1);
  std::deque<int> queue{start};
  dist[start] = 0;
  while (!queue.empty()) {
    int v = queue.front();
    queue.pop_front();
    for (int w : adj[v])
      if (dist[w] < 0) {
        dist[w] = dist[v] + 1;
        queue.push_back(w);
      }
  }
  return dist;
}

// True if `node` lies in the subtree rooted at `ancestor` (1-based heads).
bool in_subtree(const std::vector<int>& heads, int node, int ancestor) {
  for (int v = node; v != 0; v = heads[v - 1])
    if (v == ancestor) return true;
  return false;
}

}  // namespace

SynthCorpus gen_dataset(const SynthConfig& cfg, std::uint64_t seed) {
  if (cfg.distractors < 0) throw ValidationError("distractors must be >= 0");
  if (cfg.min_len < 4 + cfg.distractors || cfg.max_len < cfg.min_len)
    throw ValidationError("sentence length range must satisfy 4 + distractors <= min_len <= max_len");
  if (cfg.filler_vocab < 1 || cfg.aspect_vocab < 1 || cfg.polarity_vocab < 1)
    throw ValidationError("vocabulary sizes must be >= 1");

  Rng rng(seed);
  std::vector<int> labels(cfg.n_examples);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % kNumClasses);
  rng.shuffle(labels);

  SynthCorpus corpus;
  for (std::size_t k = 0; k < cfg.n_examples; ++k) {
    const int n = cfg.min_len + static_cast<int>(rng.below(cfg.max_len - cfg.min_len + 1));
    // Logical nodes: 0 aspect, 1 polarity, 2-3 bridge, then distractors,
    // then fillers.
    constexpr int kAspect = 0, kPolarity = 1, kBridge1 = 2, kBridge2 = 3;
    const int first_distractor = 4;
    const int first_filler = first_distractor + cfg.distractors;
    std::vector<std::vector<int>> adj(n);
    auto link = [&](int a, int b) {
      adj[a].push_back(b);
      adj[b].push_back(a);
    };
    link(kAspect, kPolarity);
    link(kAspect, kBridge1);
    link(kBridge1, kBridge2);
    std::vector<int> placed{kAspect, kPolarity, kBridge1, kBridge2};
    for (int f = first_filler; f < n; ++f) {
      link(f, placed[rng.below(placed.size())]);
      placed.push_back(f);
    }
    for (int d = first_distractor; d < first_filler; ++d) {
      auto dist = distances_from(kAspect, adj);
      std::vector<int> anchors;
      for (int v : placed)
        if (dist[v] >= 2) anchors.push_back(v);
      link(d, anchors[rng.below(anchors.size())]);
      placed.push_back(d);
    }

    // Root anywhere outside the polarity word's side so that the polarity
    // word hangs off the aspect.
    std::vector<int> side(n, 0);
    {
      std::deque<int> queue{kAspect};
      side[kAspect] = 1;
      while (!queue.empty()) {
        int v = queue.front();
        queue.pop_front();
        for (int w : adj[v])
          if (!side[w] && w != kPolarity) {
            side[w] = 1;
            queue.push_back(w);
          }
      }
    }
    std::vector<int> root_choices;
    for (int v = 0; v < n; ++v)
      if (side[v]) root_choices.push_back(v);
    const int root = root_choices[rng.below(root_choices.size())];

    std::vector<int> parent(n, -1);
    {
      std::vector<bool> seen(n, false);
      std::deque<int> queue{root};
      seen[root] = true;
      while (!queue.empty()) {
        int v = queue.front();
        queue.pop_front();
        for (int w : adj[v])
          if (!seen[w]) {
            seen[w] = true;
            parent[w] = v;
            queue.push_back(w);
          }
      }
    }

    std::vector<int> position(n);  // logical node -> 0-based token position
    for (int v = 0; v < n; ++v) position[v] = v;
    rng.shuffle(position);

    const int label = labels[k];
    std::vector<std::string> tokens(n);
    std::vector<int> heads(n);
    for (int v = 0; v < n; ++v) {
      std::string word;
      if (v == kAspect) {
        word = "asp" + std::to_string(rng.below(cfg.aspect_vocab));
      } else if (v == kPolarity) {
        word = kClassPrefix[label] + std::to_string(rng.below(cfg.polarity_vocab));
      } else if (v >= first_distractor && v < first_filler) {
        int cls = (label + 1 + static_cast<int>(rng.below(kNumClasses - 1))) % kNumClasses;
        word = kClassPrefix[cls] + std::to_string(rng.below(cfg.polarity_vocab));
      } else {
        word = "w" + std::to_string(rng.below(cfg.filler_vocab));
      }
      tokens[position[v]] = word;
      heads[position[v]] = parent[v] < 0 ? 0 : position[parent[v]] + 1;
    }

    LabeledExample ex;
    ex.tokens = tokens;
    ex.aspect_start = position[kAspect] + 1;
    ex.aspect_len = 1;
    ex.label = static_cast<Sentiment>(label);
    ex.opinion_spans = {{position[kPolarity] + 1}};
    validate_tree(heads, "synthetic sentence " + std::to_string(k + 1));
    corpus.examples.push_back(std::move(ex));
    corpus.gold.push_back(DepParse{"gold", std::move(tokens), std::move(heads)});
  }
  return corpus;
}

DepParse corrupt_parse(const DepParse& gold, double rewire_prob, Rng& rng) {
  if (!(rewire_prob >= 0.0 && rewire_prob <= 1.0)) throw ValidationError("rewire_prob must be in [0, 1]");
  validate_tree(gold.heads, gold.parser_id);
  DepParse out = gold;
  const int n = static_cast<int>(out.size());
  for (int i = 1; i <= n; ++i) {
    if (out.heads[i - 1] == 0) continue;
    if (!rng.bernoulli(rewire_prob)) continue;
    std::vector<int> choices;
    for (int j = 1; j <= n; ++j) {
      if (j == i || j == out.heads[i - 1]) continue;
      if (in_subtree(out.heads, j, i)) continue;
      choices.push_back(j);
    }
    if (choices.empty()) continue;
    out.heads[i - 1] = choices[rng.below(choices.size())];
  }
  return out;
}

DepParse corrupt_parse(const DepParse& gold, double rewire_prob, std::uint64_t seed) {
  Rng rng(seed);
  return corrupt_parse(gold, rewire_prob, rng);
}

std::vector<std::vector<DepParse>> corrupt_corpus(const std::vector<DepParse>& gold, int parsers,
                                                  double rewire_prob, std::uint64_t seed) {
  if (parsers < 1) throw ValidationError("need at least one parser channel");
  std::vector<std::vector<DepParse>> out;
  for (int m = 0; m < parsers; ++m) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(m) + 1));
    std::vector<DepParse> channel;
    channel.reserve(gold.size());
    for (const auto& g : gold) {
      DepParse p = corrupt_parse(g, rewire_prob, rng);
      p.parser_id = "parser" + std::to_string(m + 1);
      channel.push_back(std::move(p));
    }
    out.push_back(std::move(channel));
  }
  return out;
}

double merged_edge_recall(const std::vector<DepParse>& gold,
                          const std::vector<std::vector<DepParse>>& parses_by_parser) {
  std::size_t total = 0, found = 0;
  for (std::size_t k = 0; k < gold.size(); ++k) {
    std::vector<DepParse> parses;
    for (const auto& channel : parses_by_parser) parses.push_back(channel.at(k));
    TypedGraph merged = graph_merge(parses);
    for (std::size_t i = 0; i < gold[k].heads.size(); ++i) {
      int h = gold[k].heads[i];
      if (h == 0) continue;
      ++total;
      found += merged.contains({h - 1, static_cast<int>(i), EdgeType::ParentToChild});
    }
  }
  return total ? static_cast<double>(found) / static_cast<double>(total) : 1.0;
}

void write_synth(const std::filesystem::path& dir, const SynthCorpus& corpus,
                 const std::vector<std::vector<DepParse>>& parses_by_parser) {
  std::filesystem::create_directories(dir);
  save_dataset(dir / "dataset.jsonl", corpus.examples);
  auto write = [](const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
  };
  write(dir / "gold.conllu", to_conllu(corpus.gold));
  for (std::size_t m = 0; m < parses_by_parser.size(); ++m)
    write(dir / ("parser" + std::to_string(m + 1) + ".conllu"), to_conllu(parses_by_parser[m]));
}

}  // namespace graphmerge
