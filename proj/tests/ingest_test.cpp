#include "graphmerge/ingest.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "graphmerge/error.hpp"
#include "test_support.hpp"

using namespace graphmerge;

namespace {

std::string row(int id, const std::string& form, int head) {
  return std::to_string(id) + "\t" + form + "\t_\t_\t_\t_\t" + std::to_string(head) + "\tdep\t_\t_\n";
}

}  // namespace

TEST(ParseConllu, MinimalTwoTokenTree) {
  const auto parses = parse_conllu(row(1, "good", 2) + row(2, "food", 0), "corenlp");
  ASSERT_EQ(parses.size(), 1u);
  EXPECT_EQ(parses[0].parser_id, "corenlp");
  EXPECT_EQ(parses[0].tokens, (std::vector<std::string>{"good", "food"}));
  EXPECT_EQ(parses[0].heads, (std::vector<int>{2, 0}));
}

TEST(ParseConllu, StarTreeRootedAtMiddleToken) {
  const auto parses = parse_conllu(row(1, "a", 2) + row(2, "b", 0) + row(3, "c", 2), "p");
  ASSERT_EQ(parses.size(), 1u);
  EXPECT_EQ(parses[0].heads, (std::vector<int>{2, 0, 2}));
}

TEST(ParseConllu, TwoCycleWithoutRootIsStructuralError) {
  EXPECT_THROW(parse_conllu(row(1, "a", 2) + row(2, "b", 1), "p"), StructuralError);
}

TEST(ParseConllu, MultipleRootsIsStructuralError) {
  EXPECT_THROW(parse_conllu(row(1, "a", 0) + row(2, "b", 0), "p"), StructuralError);
}

TEST(ParseConllu, StructuralErrorNamesTheSentence) {
  const std::string text = row(1, "a", 0) + "\n" + row(1, "x", 2) + row(2, "y", 1);
  try {
    parse_conllu(text, "stanza");
    FAIL() << "expected StructuralError";
  } catch (const StructuralError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("stanza"), std::string::npos) << msg;
    EXPECT_NE(msg.find("sentence 2"), std::string::npos) << msg;
  }
}

TEST(ParseConllu, NonIntegerHeadReportsLineNumber) {
  const std::string text = "# sent_id = 1\n" + row(1, "a", 0) + "2\tb\t_\t_\t_\t_\tX\tdep\t_\t_\n";
  try {
    parse_conllu(text, "p");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(ParseConllu, WrongColumnCountReportsLineNumber) {
  try {
    parse_conllu(row(1, "a", 0) + "2\tb\t_\n", "p");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(ParseConllu, SkipsCommentsMultiwordRangesAndEmptyNodes) {
  const std::string text = "# text = don't go\n"
                           "1-2\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n" +
                           row(1, "do", 3) + row(2, "n't", 3) + "2.1\tghost\t_\t_\t_\t_\t_\t_\t_\t_\n" +
                           row(3, "go", 0);
  const auto parses = parse_conllu(text, "p");
  ASSERT_EQ(parses.size(), 1u);
  EXPECT_EQ(parses[0].tokens, (std::vector<std::string>{"do", "n't", "go"}));
  EXPECT_EQ(parses[0].heads, (std::vector<int>{3, 3, 0}));
}

TEST(ParseConllu, MultipleSentencesWithoutTrailingBlankLine) {
  const auto parses = parse_conllu(row(1, "a", 0) + "\n\n" + row(1, "b", 2) + row(2, "c", 0), "p");
  ASSERT_EQ(parses.size(), 2u);
  EXPECT_EQ(parses[1].heads, (std::vector<int>{2, 0}));
}

TEST(ParseConllu, RoundTripOnRandomTrees) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto tree = support::random_tree(1 + static_cast<int>(rng.below(15)), rng, "rt");
    const auto again = parse_conllu(to_conllu(tree), "rt");
    ASSERT_EQ(again.size(), 1u);
    EXPECT_EQ(again[0], tree);
  }
}

TEST(ValidateTree, AcceptedParsesHaveOneRootAndNMinusOneHeadLinks) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto tree = support::random_tree(1 + static_cast<int>(rng.below(12)), rng);
    EXPECT_NO_THROW(validate_tree(tree.heads));
    EXPECT_EQ(std::count(tree.heads.begin(), tree.heads.end(), 0), 1);
  }
}

TEST(ValidateTree, RejectsSelfHeadAndOutOfRange) {
  EXPECT_THROW(validate_tree({0, 2}), StructuralError);
  EXPECT_THROW(validate_tree({0, 3}), StructuralError);
  EXPECT_THROW(validate_tree({}), StructuralError);
}

TEST(Dataset, ParsesMinimalExample) {
  const auto ex =
      example_from_json(R"({"tokens":["the","food","is","good"],"aspect_start":2,"aspect_len":1,"label":"positive"})");
  EXPECT_EQ(ex.aspect_start, 2);
  EXPECT_EQ(ex.aspect_len, 1);
  EXPECT_EQ(ex.label, Sentiment::Positive);
  EXPECT_TRUE(ex.opinion_spans.empty());
  EXPECT_FALSE(ex.group_id.has_value());
}

TEST(Dataset, AspectOutOfBounds) {
  EXPECT_THROW(
      example_from_json(R"({"tokens":["the","food","is","good"],"aspect_start":5,"aspect_len":1,"label":"positive"})"),
      ValidationError);
}

TEST(Dataset, ConflictLabelIsRejected) {
  EXPECT_THROW(
      example_from_json(R"({"tokens":["a","b"],"aspect_start":1,"aspect_len":1,"label":"conflict"})"),
      ValidationError);
}

TEST(Dataset, EmptyTokensAndBadOpinionSpan) {
  EXPECT_THROW(example_from_json(R"({"tokens":[],"aspect_start":1,"aspect_len":1,"label":"neutral"})"),
               ValidationError);
  EXPECT_THROW(example_from_json(
                   R"({"tokens":["a","b"],"aspect_start":1,"aspect_len":1,"label":"neutral","opinion_spans":[[3]]})"),
               ValidationError);
}

TEST(Dataset, LabelIndices) {
  EXPECT_EQ(static_cast<int>(parse_label("positive")), 0);
  EXPECT_EQ(static_cast<int>(parse_label("neutral")), 1);
  EXPECT_EQ(static_cast<int>(parse_label("negative")), 2);
}

TEST(Dataset, JsonRoundTripAndLineNumbers) {
  auto ex = support::make_example({"x", "y", "z"}, 2, 2, Sentiment::Negative, {{1}, {3}});
  ex.group_id = "g7";
  EXPECT_EQ(example_from_json(example_to_json(ex)), ex);

  std::istringstream in(example_to_json(ex) + "\n\n{\"tokens\": 3}\n");
  try {
    read_dataset(in);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Align, IdenticalTokenizations) {
  const auto ex = support::make_example({"a", "b", "c"}, 1, 1, Sentiment::Neutral);
  const DepParse p1{"p1", {"a", "b", "c"}, {0, 1, 1}};
  const DepParse p2{"p2", {"a", "b", "c"}, {2, 0, 2}};
  const auto set = align(ex, {p1, p2});
  EXPECT_EQ(set.parses.size(), 2u);
}

TEST(Align, CountMismatchNamesParser) {
  const auto ex = support::make_example({"a", "b", "c"}, 1, 1, Sentiment::Neutral);
  try {
    align(ex, {DepParse{"berkeley", {"a", "b"}, {0, 1}}});
    FAIL() << "expected AlignmentError";
  } catch (const AlignmentError& e) {
    EXPECT_NE(std::string(e.what()).find("berkeley"), std::string::npos);
  }
}

TEST(Align, SurfaceMismatchNamesPosition) {
  const auto ex = support::make_example({"a", "b", "c"}, 1, 1, Sentiment::Neutral);
  const DepParse good{"p1", {"a", "b", "c"}, {0, 1, 1}};
  const DepParse bad{"p2", {"a", "B", "c"}, {0, 1, 1}};
  try {
    align(ex, {good, bad});
    FAIL() << "expected AlignmentError";
  } catch (const AlignmentError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("p2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("position 2"), std::string::npos) << msg;
  }
}

TEST(Align, CorpusCountMismatchIsError) {
  const auto ex = support::make_example({"a"}, 1, 1, Sentiment::Neutral);
  const std::vector<std::vector<DepParse>> parses{{DepParse{"p", {"a"}, {0}}, DepParse{"p", {"a"}, {0}}}};
  EXPECT_THROW(align_corpus({ex}, parses), AlignmentError);
}

TEST(ParseSourceSpec, IdFromPrefixOrStem) {
  const auto a = parse_source_entry("stanza=/data/x.conllu");
  EXPECT_EQ(a.parser_id, "stanza");
  EXPECT_EQ(a.path, std::filesystem::path("/data/x.conllu"));
  const auto b = parse_source_entry("dir/corenlp.conllu");
  EXPECT_EQ(b.parser_id, "corenlp");
  EXPECT_THROW(parse_source_entry("=x"), ValidationError);
}

TEST(LoadCorpus, ReadsAndAlignsFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "graphmerge_ingest_test";
  std::filesystem::create_directories(dir);
  const auto ex = support::make_example({"good", "food"}, 2, 1, Sentiment::Positive);
  save_dataset(dir / "d.jsonl", {ex});
  {
    std::ofstream(dir / "a.conllu") << row(1, "good", 2) << row(2, "food", 0);
    std::ofstream(dir / "b.conllu") << row(1, "good", 0) << row(2, "food", 1);
  }
  const auto corpus = load_corpus(dir / "d.jsonl", {{"a", dir / "a.conllu"}, {"b", dir / "b.conllu"}});
  ASSERT_EQ(corpus.size(), 1u);
  EXPECT_EQ(corpus[0].parses[1].parser_id, "b");
  EXPECT_THROW(load_corpus(dir / "d.jsonl", {{"a", dir / "a.conllu"}, {"a", dir / "b.conllu"}}),
               ValidationError);
  std::filesystem::remove_all(dir);
}
