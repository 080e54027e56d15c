#include "graphmerge/report.hpp"

namespace graphmerge {

using nlohmann::json;

json to_json(const GraphStats& s) {
  return {{"n", s.n},
          {"edge_count", s.edge_count},
          {"by_type",
           {{"parent_to_child", s.parent_to_child},
            {"child_to_parent", s.child_to_parent},
            {"self_loop", s.self_loop}}},
          {"diameter", s.diameter ? json(*s.diameter) : json(nullptr)}};
}

json to_json(const HopHistogram& hist) {
  json counts = json::object();
  for (const auto& [hops, count] : hist.counts) counts[std::to_string(hops)] = count;
  return {{"histogram", counts}, {"unreachable", hist.unreachable}};
}

json to_json(const HopBucketAccuracy& acc) {
  json by_hop = json::object();
  for (const auto& [hops, value] : acc.by_hop) by_hop[std::to_string(hops)] = value;
  return {{"by_hop", by_hop}, {"unreachable", acc.unreachable ? json(*acc.unreachable) : json(nullptr)}};
}

json to_json(const EvalReport& r) {
  json per_class = json::object();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& s = r.per_class[c];
    per_class[std::string(label_name(static_cast<Sentiment>(c)))] = {
        {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"support", s.support}};
  }
  return {{"accuracy", r.accuracy}, {"macro_f1", r.macro_f1}, {"per_class", per_class}, {"n", r.n}};
}

}  // namespace graphmerge
