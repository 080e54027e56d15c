#include "graphmerge/ingest.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "graphmerge/error.hpp"

namespace graphmerge {

namespace {

using nlohmann::json;

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      cols.push_back(line.substr(start));
      break;
    }
    cols.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return cols;
}

std::optional<int> to_int(std::string_view s) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string_view label_name(Sentiment s) {
  switch (s) {
    case Sentiment::Positive:
      return "positive";
    case Sentiment::Neutral:
      return "neutral";
    case Sentiment::Negative:
      return "negative";
  }
  return "?";
}

Sentiment parse_label(std::string_view name) {
  if (name == "positive") return Sentiment::Positive;
  if (name == "neutral") return Sentiment::Neutral;
  if (name == "negative") return Sentiment::Negative;
  throw ValidationError("unknown label \"" + std::string(name) +
                        "\" (expected positive, neutral or negative)");
}

void validate_tree(const std::vector<int>& heads, const std::string& where) {
  const std::string prefix = where.empty() ? std::string() : where + ": ";
  const int n = static_cast<int>(heads.size());
  if (n == 0) throw StructuralError(prefix + "empty sentence");
  int root = 0;
  std::vector<std::vector<int>> children(n + 1);
  for (int i = 1; i <= n; ++i) {
    int h = heads[i - 1];
    if (h < 0 || h > n) {
      throw StructuralError(prefix + "token " + std::to_string(i) + " has head " +
                            std::to_string(h) + " outside [0, " + std::to_string(n) + "]");
    }
    if (h == i) throw StructuralError(prefix + "token " + std::to_string(i) + " is its own head");
    if (h == 0) {
      if (root != 0) {
        throw StructuralError(prefix + "multiple roots (tokens " + std::to_string(root) + " and " +
                              std::to_string(i) + ")");
      }
      root = i;
    }
    children[h].push_back(i);
  }
  if (root == 0) throw StructuralError(prefix + "no root token (head 0)");
  // Exactly one root and n-1 head links: a tree iff everything is reachable.
  std::vector<int> stack{root};
  int seen = 0;
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    ++seen;
    for (int c : children[v]) stack.push_back(c);
  }
  if (seen != n) throw StructuralError(prefix + "head links contain a cycle");
}

void validate_example(const LabeledExample& ex) {
  const int n = static_cast<int>(ex.tokens.size());
  if (n == 0) throw ValidationError("empty token list");
  if (ex.aspect_len < 1) throw ValidationError("aspect_len must be >= 1");
  if (ex.aspect_start < 1 || ex.aspect_start + ex.aspect_len - 1 > n) {
    throw ValidationError("aspect span [" + std::to_string(ex.aspect_start) + ", " +
                          std::to_string(ex.aspect_start + ex.aspect_len - 1) +
                          "] out of bounds for " + std::to_string(n) + " tokens");
  }
  for (const auto& span : ex.opinion_spans) {
    if (span.empty()) throw ValidationError("empty opinion span");
    for (int i : span) {
      if (i < 1 || i > n) {
        throw ValidationError("opinion index " + std::to_string(i) + " out of bounds for " +
                              std::to_string(n) + " tokens");
      }
    }
  }
}

std::vector<DepParse> parse_conllu(std::string_view text, const std::string& parser_id) {
  std::vector<DepParse> out;
  DepParse current{parser_id, {}, {}};
  std::size_t block_start = 0;
  std::size_t line_no = 0;

  auto flush = [&] {
    if (current.tokens.empty()) return;
    validate_tree(current.heads, parser_id + " sentence " + std::to_string(out.size() + 1) +
                                     " (line " + std::to_string(block_start) + ")");
    out.push_back(std::move(current));
    current = DepParse{parser_id, {}, {}};
  };

  for (std::size_t pos = 0; pos < text.size();) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      flush();
      continue;
    }
    if (line.front() == '#') continue;

    auto cols = split_tabs(line);
    if (cols.size() < 8) {
      throw ParseError("expected at least 8 tab-separated columns, got " +
                           std::to_string(cols.size()),
                       line_no);
    }
    std::string_view id = cols[0];
    if (id.find('-') != std::string_view::npos || id.find('.') != std::string_view::npos) continue;
    auto idx = to_int(id);
    if (!idx) throw ParseError("non-integer token ID \"" + std::string(id) + "\"", line_no);
    if (current.tokens.empty()) block_start = line_no;
    if (*idx != static_cast<int>(current.tokens.size()) + 1) {
      throw ParseError("token ID " + std::to_string(*idx) + " out of sequence (expected " +
                           std::to_string(current.tokens.size() + 1) + ")",
                       line_no);
    }
    auto head = to_int(cols[6]);
    if (!head) throw ParseError("non-integer HEAD \"" + std::string(cols[6]) + "\"", line_no);
    current.tokens.emplace_back(cols[1]);
    current.heads.push_back(*head);
  }
  flush();
  return out;
}

std::vector<DepParse> read_conllu_file(const std::filesystem::path& path,
                                       const std::string& parser_id) {
  const std::string text = read_file(path);
  try {
    return parse_conllu(text, parser_id);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  } catch (const StructuralError& e) {
    throw StructuralError(path.string() + ": " + e.what());
  }
}

std::string to_conllu(const DepParse& parse) {
  std::string out;
  for (std::size_t i = 0; i < parse.tokens.size(); ++i) {
    out += std::to_string(i + 1);
    out += '\t';
    out += parse.tokens[i];
    out += "\t_\t_\t_\t_\t";
    out += std::to_string(parse.heads[i]);
    out += "\t_\t_\t_\n";
  }
  out += '\n';
  return out;
}

std::string to_conllu(const std::vector<DepParse>& parses) {
  std::string out;
  for (const auto& p : parses) out += to_conllu(p);
  return out;
}

LabeledExample example_from_json(std::string_view line, std::size_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
  }
  auto fail = [&](const std::string& msg) -> ParseError { return ParseError(msg, line_no); };
  if (!j.is_object()) throw fail("example must be a JSON object");
  LabeledExample ex;
  try {
    if (!j.contains("tokens") || !j["tokens"].is_array()) throw fail("missing array \"tokens\"");
    ex.tokens = j["tokens"].get<std::vector<std::string>>();
    if (!j.contains("aspect_start") || !j["aspect_start"].is_number_integer())
      throw fail("missing integer \"aspect_start\"");
    if (!j.contains("aspect_len") || !j["aspect_len"].is_number_integer())
      throw fail("missing integer \"aspect_len\"");
    if (!j.contains("label") || !j["label"].is_string()) throw fail("missing string \"label\"");
    ex.aspect_start = j["aspect_start"].get<int>();
    ex.aspect_len = j["aspect_len"].get<int>();
    if (j.contains("opinion_spans") && !j["opinion_spans"].is_null())
      ex.opinion_spans = j["opinion_spans"].get<std::vector<std::vector<int>>>();
    if (j.contains("group_id") && !j["group_id"].is_null()) {
      const auto& g = j["group_id"];
      ex.group_id = g.is_string() ? g.get<std::string>() : g.dump();
    }
  } catch (const json::exception& e) {
    throw fail(std::string("bad field type: ") + e.what());
  }
  try {
    ex.label = parse_label(j["label"].get<std::string>());
    validate_example(ex);
  } catch (const ValidationError& e) {
    throw ValidationError(line_no ? "line " + std::to_string(line_no) + ": " + e.what()
                                  : std::string(e.what()));
  }
  return ex;
}

std::string example_to_json(const LabeledExample& ex) {
  json j;
  j["tokens"] = ex.tokens;
  j["aspect_start"] = ex.aspect_start;
  j["aspect_len"] = ex.aspect_len;
  j["label"] = std::string(label_name(ex.label));
  if (!ex.opinion_spans.empty()) j["opinion_spans"] = ex.opinion_spans;
  if (ex.group_id) j["group_id"] = *ex.group_id;
  return j.dump();
}

std::vector<LabeledExample> read_dataset(std::istream& in) {
  std::vector<LabeledExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(example_from_json(line, line_no));
  }
  return out;
}

std::vector<LabeledExample> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return read_dataset(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void save_dataset(const std::filesystem::path& path, const std::vector<LabeledExample>& examples) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& ex : examples) out << example_to_json(ex) << '\n';
}

AlignedParseSet align(const LabeledExample& example, const std::vector<DepParse>& parses) {
  if (parses.empty()) throw AlignmentError("at least one parse is required");
  for (const auto& p : parses) {
    if (p.tokens.size() != example.tokens.size()) {
      throw AlignmentError("parser " + p.parser_id + ": token count " +
                           std::to_string(p.tokens.size()) + " differs from example's " +
                           std::to_string(example.tokens.size()));
    }
    for (std::size_t i = 0; i < p.tokens.size(); ++i) {
      if (p.tokens[i] != example.tokens[i]) {
        throw AlignmentError("parser " + p.parser_id + ": token mismatch at position " +
                             std::to_string(i + 1) + " (\"" + p.tokens[i] + "\" vs \"" +
                             example.tokens[i] + "\")");
      }
    }
  }
  return AlignedParseSet{example, parses};
}

std::vector<AlignedParseSet> align_corpus(const std::vector<LabeledExample>& examples,
                                          const std::vector<std::vector<DepParse>>& parses_by_parser) {
  if (parses_by_parser.empty()) throw AlignmentError("at least one parser is required");
  for (const auto& file : parses_by_parser) {
    if (file.size() != examples.size()) {
      std::string id = file.empty() ? std::string("?") : file.front().parser_id;
      throw AlignmentError("parser " + id + ": " + std::to_string(file.size()) +
                           " sentences but dataset has " + std::to_string(examples.size()));
    }
  }
  std::vector<AlignedParseSet> out;
  out.reserve(examples.size());
  for (std::size_t k = 0; k < examples.size(); ++k) {
    std::vector<DepParse> parses;
    for (const auto& file : parses_by_parser) parses.push_back(file[k]);
    try {
      out.push_back(align(examples[k], parses));
    } catch (const AlignmentError& e) {
      throw AlignmentError("example " + std::to_string(k + 1) + ": " + e.what());
    }
  }
  return out;
}

ParseSource parse_source_entry(std::string_view entry) {
  if (entry.empty()) throw ValidationError("empty parse file entry");
  const auto eq = entry.find('=');
  if (eq == std::string_view::npos) {
    std::filesystem::path path{std::string(entry)};
    return {path.stem().string(), path};
  }
  if (eq == 0 || eq + 1 == entry.size())
    throw ValidationError("parse file entry \"" + std::string(entry) + "\" must be ID=PATH or PATH");
  return {std::string(entry.substr(0, eq)), std::filesystem::path{std::string(entry.substr(eq + 1))}};
}

std::vector<AlignedParseSet> load_corpus(const std::filesystem::path& dataset,
                                         const std::vector<ParseSource>& sources) {
  std::set<std::string> ids;
  for (const auto& s : sources)
    if (!ids.insert(s.parser_id).second) throw ValidationError("duplicate parser id \"" + s.parser_id + "\"");
  const auto examples = load_dataset(dataset);
  std::vector<std::vector<DepParse>> parses;
  for (const auto& s : sources) parses.push_back(read_conllu_file(s.path, s.parser_id));
  return align_corpus(examples, parses);
}

}  // namespace graphmerge
