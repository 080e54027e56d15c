#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace graphmerge {

inline constexpr int kNumClasses = 3;

enum class Sentiment : int { Positive = 0, Neutral = 1, Negative = 2 };

std::string_view label_name(Sentiment s);
// Throws ValidationError for anything other than positive/neutral/negative.
Sentiment parse_label(std::string_view name);

// One parser's dependency tree. Token positions are 1-based; heads[i - 1] is
// the head of token i, 0 marks the root.
struct DepParse {
  std::string parser_id;
  std::vector<std::string> tokens;
  std::vector<int> heads;

  std::size_t size() const { return tokens.size(); }
  bool operator==(const DepParse&) const = default;
};

// Throws StructuralError unless `heads` describes a single-rooted tree.
// `where` is prepended to the message to identify the sentence.
void validate_tree(const std::vector<int>& heads, const std::string& where = {});

struct LabeledExample {
  std::vector<std::string> tokens;
  int aspect_start = 1;  // 1-based
  int aspect_len = 1;
  Sentiment label = Sentiment::Positive;
  // Opinion word positions (1-based), one set per annotated opinion span.
  std::vector<std::vector<int>> opinion_spans;
  // Robustness-group id; examples sharing it are scored as one ARS unit.
  std::optional<std::string> group_id;

  std::size_t size() const { return tokens.size(); }
  bool operator==(const LabeledExample&) const = default;
};

void validate_example(const LabeledExample& ex);

struct AlignedParseSet {
  LabeledExample example;
  std::vector<DepParse> parses;
};

// CoNLL-U reader. Uses columns ID, FORM and HEAD; DEPREL and the rest are
// ignored. Multiword ranges ("1-2") and empty nodes ("1.1") are skipped.
std::vector<DepParse> parse_conllu(std::string_view text, const std::string& parser_id);
std::vector<DepParse> read_conllu_file(const std::filesystem::path& path,
                                       const std::string& parser_id);

// Writes ID, FORM and HEAD; every other column is "_".
std::string to_conllu(const DepParse& parse);
std::string to_conllu(const std::vector<DepParse>& parses);

// Dataset JSONL: one example object per non-blank line.
LabeledExample example_from_json(std::string_view line, std::size_t line_no = 0);
std::string example_to_json(const LabeledExample& ex);
std::vector<LabeledExample> read_dataset(std::istream& in);
std::vector<LabeledExample> load_dataset(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path, const std::vector<LabeledExample>& examples);

AlignedParseSet align(const LabeledExample& example, const std::vector<DepParse>& parses);

// Positional corpus alignment: the k-th sentence of every parser file belongs
// to the k-th example. parses_by_parser[m][k] is parser m's parse of example k.
std::vector<AlignedParseSet> align_corpus(const std::vector<LabeledExample>& examples,
                                          const std::vector<std::vector<DepParse>>& parses_by_parser);

// One "--parses" entry: "ID=PATH", or a bare PATH whose file stem is the id.
struct ParseSource {
  std::string parser_id;
  std::filesystem::path path;
};

ParseSource parse_source_entry(std::string_view entry);

// Reads the dataset and every parse file, then aligns them positionally.
std::vector<AlignedParseSet> load_corpus(const std::filesystem::path& dataset,
                                         const std::vector<ParseSource>& sources);

}  // namespace graphmerge
