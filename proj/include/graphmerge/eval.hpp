#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "graphmerge/ingest.hpp"

namespace graphmerge {

double accuracy(std::span<const int> preds, std::span<const int> golds);

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;    // gold count
  std::size_t predicted = 0;  // predicted count
};

std::vector<ClassScores> per_class_scores(std::span<const int> preds, std::span<const int> golds,
                                          int num_classes = kNumClasses);

// Unweighted mean of per-class F1. A class with neither gold nor predicted
// instances is left out of the mean; if every class is left out the score
// is 0.
double macro_f1(std::span<const int> preds, std::span<const int> golds, int num_classes = kNumClasses);

// Plurality vote per example. Ties go to the tied class with the highest
// summed probability, then to the lowest class index. prob_lists may be
// empty, in which case ties go straight to the lowest index.
std::vector<int> label_ensemble(std::span<const std::vector<int>> pred_lists,
                                std::span<const std::vector<std::array<double, kNumClasses>>> prob_lists);

struct ArsGroup {
  bool source_correct = false;
  std::vector<bool> variants_correct;
};

// Fraction of groups whose source and every variant are correct.
double ars_score(std::span<const ArsGroup> groups);

struct HopBucketAccuracy {
  std::map<int, double> by_hop;
  std::optional<double> unreachable;
};

// `hops[i]` is nullopt for unreachable examples. Empty buckets are omitted.
HopBucketAccuracy hop_bucket_accuracy(std::span<const std::optional<int>> hops,
                                      const std::vector<bool>& correct);

struct EvalReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassScores> per_class;
  std::size_t n = 0;
};

EvalReport evaluate_predictions(std::span<const int> preds, std::span<const int> golds);

}  // namespace graphmerge
