#include "graphmerge/graph.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

#include "graphmerge/error.hpp"

namespace graphmerge {

namespace {

// Undirected adjacency without self loops.
std::vector<std::vector<int>> undirected_adjacency(const TypedGraph& g) {
  std::vector<std::vector<int>> adj(g.node_count());
  for (const Edge& e : g.edges()) {
    if (e.type == EdgeType::SelfLoop) continue;
    adj[e.src].push_back(e.dst);
    adj[e.dst].push_back(e.src);
  }
  for (auto& nbrs : adj) {
    std::sort(nbrs.begin(), nbrs.end());
    nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
  }
  return adj;
}

std::vector<int> bfs(const std::vector<std::vector<int>>& adj, const std::set<int>& sources) {
  std::vector<int> dist(adj.size(), -1);
  std::deque<int> queue;
  for (int s : sources) {
    dist[s] = 0;
    queue.push_back(s);
  }
  while (!queue.empty()) {
    int v = queue.front();
    queue.pop_front();
    for (int w : adj[v]) {
      if (dist[w] < 0) {
        dist[w] = dist[v] + 1;
        queue.push_back(w);
      }
    }
  }
  return dist;
}

using HeadLink = std::pair<int, int>;  // (head, dependent), 0-based

std::set<HeadLink> head_links(const DepParse& parse) {
  std::set<HeadLink> links;
  for (std::size_t i = 0; i < parse.heads.size(); ++i) {
    if (parse.heads[i] != 0) links.emplace(parse.heads[i] - 1, static_cast<int>(i));
  }
  return links;
}

TypedGraph graph_from_links(int n, const std::set<HeadLink>& links) {
  std::set<Edge> edges;
  for (auto [h, d] : links) {
    edges.insert({h, d, EdgeType::ParentToChild});
    edges.insert({d, h, EdgeType::ChildToParent});
  }
  for (int i = 0; i < n; ++i) edges.insert({i, i, EdgeType::SelfLoop});
  return TypedGraph(n, std::move(edges));
}

}  // namespace

std::string_view edge_type_name(EdgeType t) {
  switch (t) {
    case EdgeType::ParentToChild:
      return "parent_to_child";
    case EdgeType::ChildToParent:
      return "child_to_parent";
    case EdgeType::SelfLoop:
      return "self_loop";
  }
  return "?";
}

TypedGraph::TypedGraph(int n, std::set<Edge> edges) : n_(n), edges_(edges.begin(), edges.end()) {
  if (n < 1) throw ValidationError("graph must have at least one node");
  std::vector<bool> has_loop(n, false);
  for (const Edge& e : edges_) {
    if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n)
      throw StructuralError("edge endpoint outside [0, " + std::to_string(n) + ")");
    if ((e.type == EdgeType::SelfLoop) != (e.src == e.dst))
      throw StructuralError("self-loop type must be used exactly on (i, i) edges");
    if (e.type == EdgeType::SelfLoop) has_loop[e.src] = true;
    if (e.type == EdgeType::ParentToChild && !edges.contains({e.dst, e.src, EdgeType::ChildToParent}))
      throw StructuralError("parent-to-child edge without child-to-parent reciprocal");
    if (e.type == EdgeType::ChildToParent && !edges.contains({e.dst, e.src, EdgeType::ParentToChild}))
      throw StructuralError("child-to-parent edge without parent-to-child reciprocal");
  }
  for (int i = 0; i < n; ++i) {
    if (!has_loop[i]) throw StructuralError("node " + std::to_string(i) + " lacks a self loop");
  }
}

std::size_t TypedGraph::count(EdgeType t) const {
  return static_cast<std::size_t>(
      std::count_if(edges_.begin(), edges_.end(), [t](const Edge& e) { return e.type == t; }));
}

bool TypedGraph::contains(const Edge& e) const {
  return std::binary_search(edges_.begin(), edges_.end(), e);
}

TypedGraph TypedGraph::permuted(std::span<const int> perm) const {
  if (perm.size() != static_cast<std::size_t>(n_)) throw ValidationError("permutation size mismatch");
  std::set<Edge> out;
  for (const Edge& e : edges_) out.insert({perm[e.src], perm[e.dst], e.type});
  return TypedGraph(n_, std::move(out));
}

TypedGraph build_tree_graph(const DepParse& parse) {
  validate_tree(parse.heads, parse.parser_id);
  return graph_from_links(static_cast<int>(parse.size()), head_links(parse));
}

TypedGraph graph_merge(std::span<const TypedGraph> graphs) {
  if (graphs.empty()) throw ValidationError("graph_merge needs at least one graph");
  const int n = graphs.front().node_count();
  std::set<Edge> edges;
  for (const auto& g : graphs) {
    if (g.node_count() != n)
      throw ValidationError("graph_merge: node counts differ (" + std::to_string(n) + " vs " +
                            std::to_string(g.node_count()) + ")");
    edges.insert(g.edges().begin(), g.edges().end());
  }
  return TypedGraph(n, std::move(edges));
}

TypedGraph graph_merge(std::span<const DepParse> parses) {
  std::vector<TypedGraph> graphs;
  graphs.reserve(parses.size());
  for (const auto& p : parses) graphs.push_back(build_tree_graph(p));
  return graph_merge(graphs);
}

TypedGraph graph_intersect(std::span<const DepParse> parses) {
  if (parses.empty()) throw ValidationError("graph_intersect needs at least one parse");
  const std::size_t n = parses.front().size();
  std::set<HeadLink> shared;
  bool first = true;
  for (const auto& p : parses) {
    if (p.size() != n)
      throw ValidationError("graph_intersect: token counts differ (" + std::to_string(n) + " vs " +
                            std::to_string(p.size()) + ")");
    validate_tree(p.heads, p.parser_id);
    auto links = head_links(p);
    if (first) {
      shared = std::move(links);
      first = false;
      continue;
    }
    std::set<HeadLink> kept;
    std::set_intersection(shared.begin(), shared.end(), links.begin(), links.end(),
                          std::inserter(kept, kept.end()));
    shared = std::move(kept);
  }
  return graph_from_links(static_cast<int>(n), shared);
}

std::optional<int> shortest_hops(const TypedGraph& g, const std::set<int>& src_set,
                                 const std::set<int>& dst_set) {
  if (src_set.empty() || dst_set.empty()) throw ValidationError("shortest_hops: empty node set");
  for (const auto* s : {&src_set, &dst_set}) {
    if (*s->begin() < 0 || *s->rbegin() >= g.node_count())
      throw ValidationError("shortest_hops: node index out of range");
  }
  auto dist = bfs(undirected_adjacency(g), src_set);
  std::optional<int> best;
  for (int d : dst_set) {
    if (dist[d] >= 0 && (!best || dist[d] < *best)) best = dist[d];
  }
  return best;
}

std::vector<std::vector<int>> all_pair_hops(const TypedGraph& g) {
  auto adj = undirected_adjacency(g);
  std::vector<std::vector<int>> out;
  out.reserve(g.node_count());
  for (int s = 0; s < g.node_count(); ++s) out.push_back(bfs(adj, {s}));
  return out;
}

std::optional<int> diameter(const TypedGraph& g) {
  int best = 0;
  for (const auto& row : all_pair_hops(g)) {
    for (int d : row) {
      if (d < 0) return std::nullopt;
      best = std::max(best, d);
    }
  }
  return best;
}

std::set<int> aspect_nodes(const LabeledExample& ex) {
  std::set<int> out;
  for (int i = 0; i < ex.aspect_len; ++i) out.insert(ex.aspect_start - 1 + i);
  return out;
}

std::set<int> opinion_nodes(const LabeledExample& ex) {
  std::set<int> out;
  for (const auto& span : ex.opinion_spans)
    for (int i : span) out.insert(i - 1);
  return out;
}

std::optional<int> aspect_opinion_hops(const LabeledExample& ex, const TypedGraph& g) {
  if (ex.opinion_spans.empty()) throw ValidationError("example has no opinion annotations");
  if (static_cast<int>(ex.size()) != g.node_count())
    throw ValidationError("example length differs from graph node count");
  return shortest_hops(g, aspect_nodes(ex), opinion_nodes(ex));
}

HopHistogram hop_histogram(std::span<const std::pair<LabeledExample, TypedGraph>> examples) {
  HopHistogram hist;
  for (const auto& [ex, g] : examples) {
    auto hops = aspect_opinion_hops(ex, g);
    if (hops)
      ++hist.counts[*hops];
    else
      ++hist.unreachable;
  }
  return hist;
}

std::string export_dot(const TypedGraph& g, std::span<const std::string> tokens) {
  if (tokens.size() != static_cast<std::size_t>(g.node_count()))
    throw ValidationError("export_dot: token count differs from node count");
  std::ostringstream out;
  out << "digraph G {\n";
  for (int i = 0; i < g.node_count(); ++i) {
    std::string label = std::to_string(i) + ":" + tokens[i];
    std::string escaped;
    for (char c : label) {
      if (c == '"' || c == '\\') escaped += '\\';
      escaped += c;
    }
    out << "  n" << i << " [label=\"" << escaped << "\"];\n";
  }
  for (const Edge& e : g.edges()) {
    if (e.type == EdgeType::ParentToChild) out << "  n" << e.src << " -> n" << e.dst << " [style=solid];\n";
  }
  out << "}\n";
  return out.str();
}

GraphStats graph_stats(const TypedGraph& g) {
  GraphStats s;
  s.n = g.node_count();
  s.edge_count = g.edge_count();
  s.parent_to_child = g.count(EdgeType::ParentToChild);
  s.child_to_parent = g.count(EdgeType::ChildToParent);
  s.self_loop = g.count(EdgeType::SelfLoop);
  s.diameter = diameter(g);
  return s;
}

}  // namespace graphmerge
