#pragma once

// Helpers shared by the unit and acceptance tests. The oracles here work
// directly on head arrays and adjacency matrices so they do not go through
// the library code they check.

#include <algorithm>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "graphmerge/graph.hpp"
#include "graphmerge/ingest.hpp"
#include "graphmerge/rng.hpp"

namespace graphmerge::support {

using Triple = std::tuple<int, int, int>;  // src, dst, edge type

inline std::vector<std::string> numbered_tokens(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back("t" + std::to_string(i + 1));
  return out;
}

// Random labelled tree: nodes are visited in a random order, the first is the
// root and every later node picks its head among those already visited.
inline DepParse random_tree(int n, Rng& rng, const std::string& id = "p") {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 1);
  rng.shuffle(order);
  std::vector<int> heads(n, 0);
  for (int k = 1; k < n; ++k) heads[order[k] - 1] = order[rng.below(k)];
  return DepParse{id, numbered_tokens(n), heads};
}

inline std::vector<DepParse> random_trees(int n, int m, Rng& rng) {
  std::vector<DepParse> out;
  for (int i = 0; i < m; ++i) out.push_back(random_tree(n, rng, "p" + std::to_string(i + 1)));
  return out;
}

inline std::set<Triple> tree_triples(const std::vector<int>& heads) {
  std::set<Triple> out;
  const int n = static_cast<int>(heads.size());
  for (int i = 1; i <= n; ++i) {
    out.emplace(i - 1, i - 1, 2);
    if (heads[i - 1] == 0) continue;
    out.emplace(heads[i - 1] - 1, i - 1, 0);
    out.emplace(i - 1, heads[i - 1] - 1, 1);
  }
  return out;
}

inline std::set<Triple> union_oracle(const std::vector<DepParse>& parses) {
  std::set<Triple> out;
  for (const auto& p : parses) {
    auto t = tree_triples(p.heads);
    out.insert(t.begin(), t.end());
  }
  return out;
}

inline std::set<Triple> intersect_oracle(const std::vector<DepParse>& parses) {
  const int n = static_cast<int>(parses.front().size());
  std::set<Triple> out;
  for (int i = 1; i <= n; ++i) {
    out.emplace(i - 1, i - 1, 2);
    const int h = parses.front().heads[i - 1];
    if (h == 0) continue;
    bool shared = true;
    for (const auto& p : parses) shared = shared && p.heads[i - 1] == h;
    if (shared) {
      out.emplace(h - 1, i - 1, 0);
      out.emplace(i - 1, h - 1, 1);
    }
  }
  return out;
}

inline std::set<Triple> triples_of(const TypedGraph& g) {
  std::set<Triple> out;
  for (const auto& e : g.edges()) out.emplace(e.src, e.dst, static_cast<int>(e.type));
  return out;
}

inline bool is_subset(const std::set<Triple>& a, const std::set<Triple>& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

// Floyd-Warshall over the undirected view of a triple set (self loops
// ignored). -1 marks unreachable pairs.
inline std::vector<std::vector<int>> floyd_distances(int n, const std::set<Triple>& triples) {
  constexpr int inf = std::numeric_limits<int>::max() / 4;
  std::vector<std::vector<int>> d(n, std::vector<int>(n, inf));
  for (int i = 0; i < n; ++i) d[i][i] = 0;
  for (const auto& [s, t, type] : triples) {
    if (s == t) continue;
    d[s][t] = d[t][s] = 1;
  }
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
  for (auto& row : d)
    for (int& v : row)
      if (v >= inf) v = -1;
  return d;
}

inline LabeledExample make_example(std::vector<std::string> tokens, int aspect_start, int aspect_len,
                                   Sentiment label, std::vector<std::vector<int>> opinions = {}) {
  LabeledExample ex;
  ex.tokens = std::move(tokens);
  ex.aspect_start = aspect_start;
  ex.aspect_len = aspect_len;
  ex.label = label;
  ex.opinion_spans = std::move(opinions);
  return ex;
}

}  // namespace graphmerge::support
