#pragma once

#include <json.hpp>

#include "graphmerge/eval.hpp"
#include "graphmerge/graph.hpp"

// JSON shapes written by the command-line tool.
namespace graphmerge {

// {n, edge_count, by_type: {parent_to_child, child_to_parent, self_loop}, diameter}
// diameter is null for a disconnected graph.
nlohmann::json to_json(const GraphStats& stats);

// {histogram: {"<hops>": count, ...}, unreachable}
nlohmann::json to_json(const HopHistogram& hist);

// {by_hop: {"<hops>": accuracy, ...}, unreachable: accuracy | null}
nlohmann::json to_json(const HopBucketAccuracy& acc);

// {accuracy, macro_f1, per_class: {positive|neutral|negative: {precision, recall, f1, support}}, n}
nlohmann::json to_json(const EvalReport& report);

}  // namespace graphmerge
