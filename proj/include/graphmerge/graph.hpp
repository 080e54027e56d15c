#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "graphmerge/ingest.hpp"

namespace graphmerge {

enum class EdgeType : int { ParentToChild = 0, ChildToParent = 1, SelfLoop = 2 };
inline constexpr int kNumEdgeTypes = 3;

std::string_view edge_type_name(EdgeType t);

// Directed typed edge over 0-based node indices. For node i, the edges with
// src == i form its attention neighborhood; the type is read from i's side.
struct Edge {
  int src = 0;
  int dst = 0;
  EdgeType type = EdgeType::SelfLoop;

  auto operator<=>(const Edge&) const = default;
};

// Immutable directed multigraph with typed edges. Edges are unique and kept
// sorted by (src, dst, type). Invariants (self loop on every node, reciprocal
// parent/child pairs) are checked on construction.
class TypedGraph {
 public:
  TypedGraph(int n, std::set<Edge> edges);

  int node_count() const { return n_; }
  std::span<const Edge> edges() const { return edges_; }
  std::size_t edge_count() const { return edges_.size(); }
  std::size_t count(EdgeType t) const;
  bool contains(const Edge& e) const;
  std::set<Edge> edge_set() const { return {edges_.begin(), edges_.end()}; }

  // Relabel node i as perm[i].
  TypedGraph permuted(std::span<const int> perm) const;

  bool operator==(const TypedGraph&) const = default;

 private:
  int n_;
  std::vector<Edge> edges_;
};

// Reciprocal parent/child edges for every head link plus a self loop per node.
TypedGraph build_tree_graph(const DepParse& parse);

// Edge-set union of graphs over the same nodes.
TypedGraph graph_merge(std::span<const TypedGraph> graphs);
TypedGraph graph_merge(std::span<const DepParse> parses);

// Keeps head->dependent links present in every parse, then adds reciprocals
// and self loops. May be disconnected.
TypedGraph graph_intersect(std::span<const DepParse> parses);

// Minimum undirected hop count between the two node sets, self loops ignored.
// nullopt when no pair is connected.
std::optional<int> shortest_hops(const TypedGraph& g, const std::set<int>& src_set,
                                 const std::set<int>& dst_set);

// All-pairs undirected BFS distances (-1 = unreachable).
std::vector<std::vector<int>> all_pair_hops(const TypedGraph& g);

// Largest pairwise distance; nullopt if the graph is disconnected.
std::optional<int> diameter(const TypedGraph& g);

struct HopHistogram {
  std::map<int, std::size_t> counts;
  std::size_t unreachable = 0;

  bool operator==(const HopHistogram&) const = default;
};

// 0-based node sets derived from an example.
std::set<int> aspect_nodes(const LabeledExample& ex);
std::set<int> opinion_nodes(const LabeledExample& ex);

// Distance from the aspect span to the union of annotated opinion words.
// Throws ValidationError when the example has no opinion annotation.
std::optional<int> aspect_opinion_hops(const LabeledExample& ex, const TypedGraph& g);

HopHistogram hop_histogram(std::span<const std::pair<LabeledExample, TypedGraph>> examples);

// DOT text: parent->child edges only, nodes labeled "index:token".
std::string export_dot(const TypedGraph& g, std::span<const std::string> tokens);

struct GraphStats {
  int n = 0;
  std::size_t edge_count = 0;
  std::size_t parent_to_child = 0;
  std::size_t child_to_parent = 0;
  std::size_t self_loop = 0;
  std::optional<int> diameter;
};

GraphStats graph_stats(const TypedGraph& g);

}  // namespace graphmerge
