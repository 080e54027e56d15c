#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "graphmerge/ingest.hpp"

namespace graphmerge {

class Rng;

struct SynthConfig {
  std::size_t n_examples = 1000;
  int min_len = 8;
  int max_len = 14;
  int distractors = 1;
  int filler_vocab = 40;
  int aspect_vocab = 8;
  int polarity_vocab = 3;  // words per sentiment class
};

struct SynthCorpus {
  std::vector<LabeledExample> examples;
  std::vector<DepParse> gold;
};

// Each sentence has one aspect word, one polarity word whose class is the
// label and which depends directly on the aspect, and `distractors` polarity
// words of other classes at least 3 hops from the aspect. The rest are
// fillers. Labels are balanced to within one example per class.
SynthCorpus gen_dataset(const SynthConfig& cfg, std::uint64_t seed);

// Each non-root token, with probability `rewire_prob`, moves to a different
// head drawn uniformly among those that keep the tree acyclic. Tokens with
// no alternative head keep theirs.
DepParse corrupt_parse(const DepParse& gold, double rewire_prob, Rng& rng);
DepParse corrupt_parse(const DepParse& gold, double rewire_prob, std::uint64_t seed);

// parses[m][k]: parser m's corruption of sentence k; ids "parser1".."parserM".
std::vector<std::vector<DepParse>> corrupt_corpus(const std::vector<DepParse>& gold, int parsers,
                                                  double rewire_prob, std::uint64_t seed);

// Fraction of gold head links present in the merged graph of the parses.
double merged_edge_recall(const std::vector<DepParse>& gold,
                          const std::vector<std::vector<DepParse>>& parses_by_parser);

// Writes dataset.jsonl, gold.conllu and parser<m>.conllu into `dir`.
void write_synth(const std::filesystem::path& dir, const SynthCorpus& corpus,
                 const std::vector<std::vector<DepParse>>& parses_by_parser);

}  // namespace graphmerge
