#include "graphmerge/eval.hpp"

#include "graphmerge/error.hpp"

namespace graphmerge {

namespace {

void check_lengths(std::span<const int> preds, std::span<const int> golds) {
  if (preds.size() != golds.size())
    throw ValidationError("prediction count " + std::to_string(preds.size()) + " != gold count " +
                          std::to_string(golds.size()));
}

}  // namespace

double accuracy(std::span<const int> preds, std::span<const int> golds) {
  check_lengths(preds, golds);
  if (preds.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == golds[i];
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

std::vector<ClassScores> per_class_scores(std::span<const int> preds, std::span<const int> golds,
                                          int num_classes) {
  check_lengths(preds, golds);
  std::vector<std::size_t> tp(num_classes, 0);
  std::vector<ClassScores> out(num_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= num_classes || golds[i] < 0 || golds[i] >= num_classes)
      throw ValidationError("class index out of range");
    ++out[golds[i]].support;
    ++out[preds[i]].predicted;
    if (preds[i] == golds[i]) ++tp[preds[i]];
  }
  for (int c = 0; c < num_classes; ++c) {
    auto& s = out[c];
    s.precision = s.predicted ? static_cast<double>(tp[c]) / static_cast<double>(s.predicted) : 0.0;
    s.recall = s.support ? static_cast<double>(tp[c]) / static_cast<double>(s.support) : 0.0;
    s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  }
  return out;
}

double macro_f1(std::span<const int> preds, std::span<const int> golds, int num_classes) {
  double total = 0.0;
  int counted = 0;
  for (const auto& s : per_class_scores(preds, golds, num_classes)) {
    if (s.support == 0 && s.predicted == 0) continue;
    total += s.f1;
    ++counted;
  }
  return counted ? total / counted : 0.0;
}

std::vector<int> label_ensemble(std::span<const std::vector<int>> pred_lists,
                                std::span<const std::vector<std::array<double, kNumClasses>>> prob_lists) {
  if (pred_lists.empty()) throw ValidationError("label_ensemble needs at least one prediction list");
  const bool use_probs = !prob_lists.empty();
  if (use_probs && prob_lists.size() != pred_lists.size())
    throw ValidationError("label_ensemble: probability lists do not match prediction lists");
  const std::size_t n = pred_lists.front().size();
  for (std::size_t m = 0; m < pred_lists.size(); ++m) {
    if (pred_lists[m].size() != n || (use_probs && prob_lists[m].size() != n))
      throw ValidationError("label_ensemble: lists have different lengths");
  }
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::array<int, kNumClasses> votes{};
    std::array<double, kNumClasses> mass{};
    for (std::size_t m = 0; m < pred_lists.size(); ++m) {
      int p = pred_lists[m][i];
      if (p < 0 || p >= kNumClasses) throw ValidationError("class index out of range");
      ++votes[p];
      if (use_probs)
        for (int c = 0; c < kNumClasses; ++c) mass[c] += prob_lists[m][i][c];
    }
    int best = 0;
    for (int c = 1; c < kNumClasses; ++c) {
      if (votes[c] > votes[best] || (votes[c] == votes[best] && mass[c] > mass[best])) best = c;
    }
    out[i] = best;
  }
  return out;
}

double ars_score(std::span<const ArsGroup> groups) {
  if (groups.empty()) return 0.0;
  std::size_t units = 0;
  for (const auto& g : groups) {
    bool ok = g.source_correct;
    for (bool v : g.variants_correct) ok = ok && v;
    units += ok;
  }
  return static_cast<double>(units) / static_cast<double>(groups.size());
}

HopBucketAccuracy hop_bucket_accuracy(std::span<const std::optional<int>> hops,
                                      const std::vector<bool>& correct) {
  if (hops.size() != correct.size()) throw ValidationError("hop and correctness lists differ in length");
  std::map<int, std::pair<std::size_t, std::size_t>> tally;
  std::size_t un_hit = 0, un_total = 0;
  for (std::size_t i = 0; i < hops.size(); ++i) {
    if (hops[i]) {
      auto& [hit, total] = tally[*hops[i]];
      hit += correct[i];
      ++total;
    } else {
      un_hit += correct[i];
      ++un_total;
    }
  }
  HopBucketAccuracy out;
  for (const auto& [h, ht] : tally)
    out.by_hop[h] = static_cast<double>(ht.first) / static_cast<double>(ht.second);
  if (un_total) out.unreachable = static_cast<double>(un_hit) / static_cast<double>(un_total);
  return out;
}

EvalReport evaluate_predictions(std::span<const int> preds, std::span<const int> golds) {
  EvalReport r;
  r.accuracy = accuracy(preds, golds);
  r.macro_f1 = macro_f1(preds, golds);
  r.per_class = per_class_scores(preds, golds);
  r.n = preds.size();
  return r;
}

}  // namespace graphmerge
