#include "emobench/prompt.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "emobench/errors.hpp"
#include "resources.hpp"

namespace emobench {
namespace {

constexpr std::array<std::string_view, 5> kStrategyNames = {"basic", "mask", "percent", "numeric", "inverse"};
constexpr std::array<std::string_view, 3> kDialectNames = {"plain-instruct", "quoted-input", "header-delimited"};
constexpr std::array<std::string_view, 5> kGrammarNames = {"single-label", "bitstring", "percent-object",
                                                           "integer-code", "single-label-inverse"};

std::size_t idx(DialectKind d) { return static_cast<std::size_t>(d); }
std::size_t idx(PromptStrategy s) { return static_cast<std::size_t>(s); }

std::string join(const std::vector<std::string>& items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

// "a, b, or c" / "a or b" / "a"
std::string alternatives(const std::vector<std::string>& items) {
  if (items.size() <= 1) return join(items, "");
  if (items.size() == 2) return items[0] + " or " + items[1];
  std::string out;
  for (std::size_t i = 0; i + 1 < items.size(); ++i) out += items[i] + ", ";
  return out + "or " + items.back();
}

// "x, y, and z" / "x and y" / "x"
std::string conjunction(const std::vector<std::string>& items) {
  if (items.size() <= 1) return join(items, "");
  if (items.size() == 2) return items[0] + " and " + items[1];
  std::string out;
  for (std::size_t i = 0; i + 1 < items.size(); ++i) out += items[i] + ", ";
  return out + "and " + items.back();
}

std::string group_definitions(const GroupingScheme& scheme) {
  std::vector<std::string> parts;
  for (const auto& g : scheme.groups()) {
    std::vector<std::string> members;
    for (Emotion e : g.members) members.emplace_back(label_name(e));
    parts.push_back("the " + g.name + " emotion group will be (" + join(members, "/") + ")");
  }
  return conjunction(parts);
}

std::string inverse_pairs(const Involution& inv) {
  std::vector<std::string> parts;
  for (const auto& [a, b] : inv.pairs()) {
    if (a == b) {
      parts.push_back(std::string(label_name(a)) + " is its own inverse");
    } else {
      parts.push_back(std::string(label_name(a)) + " and " + std::string(label_name(b)) + " are inverse emotions");
    }
  }
  return conjunction(parts);
}

std::string substitute(std::string_view tmpl, const std::vector<std::pair<std::string_view, std::string>>& values) {
  std::string out;
  out.reserve(tmpl.size() + 256);
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const std::size_t open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    const std::size_t close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    out.append(tmpl.substr(pos, open - pos));
    const std::string_view key = tmpl.substr(open + 2, close - open - 2);
    bool found = false;
    for (const auto& [name, value] : values) {
      if (name == key) {
        out += value;
        found = true;
        break;
      }
    }
    if (!found) throw ConfigError("unknown template placeholder {{" + std::string(key) + "}}");
    pos = close + 2;
  }
  return out;
}

std::vector<Segment> split_segments(const std::string& text) {
  static constexpr std::string_view kMarker = "\n@user\n";
  const std::size_t at = text.find(kMarker);
  if (at == std::string::npos) return {{Role::user, text}};
  std::vector<Segment> segments;
  if (at > 0) segments.push_back({Role::system, text.substr(0, at)});
  segments.push_back({Role::user, text.substr(at + kMarker.size())});
  return segments;
}

std::string strip_final_newline(std::string text) {
  if (text.ends_with("\r\n")) {
    text.resize(text.size() - 2);
  } else if (text.ends_with('\n')) {
    text.pop_back();
  }
  return text;
}

}  // namespace

const std::array<PromptStrategy, 5>& all_strategies() {
  static constexpr std::array<PromptStrategy, 5> kAll = {PromptStrategy::basic, PromptStrategy::mask,
                                                         PromptStrategy::percent, PromptStrategy::numeric,
                                                         PromptStrategy::inverse};
  return kAll;
}

std::string_view strategy_name(PromptStrategy s) { return kStrategyNames[idx(s)]; }

std::optional<PromptStrategy> strategy_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kStrategyNames.size(); ++i) {
    if (kStrategyNames[i] == name) return static_cast<PromptStrategy>(i);
  }
  return std::nullopt;
}

std::string_view dialect_name(DialectKind d) { return kDialectNames[idx(d)]; }

std::optional<DialectKind> dialect_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kDialectNames.size(); ++i) {
    if (kDialectNames[i] == name) return static_cast<DialectKind>(i);
  }
  return std::nullopt;
}

std::string_view role_name(Role r) { return r == Role::system ? "system" : "user"; }

std::string_view grammar_kind_name(GrammarKind g) { return kGrammarNames[static_cast<std::size_t>(g)]; }

std::optional<GrammarKind> grammar_kind_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kGrammarNames.size(); ++i) {
    if (kGrammarNames[i] == name) return static_cast<GrammarKind>(i);
  }
  return std::nullopt;
}

std::string RenderedPrompt::flat() const {
  std::string out;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (i) out += '\n';
    out += segments[i].content;
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> mask_alphabet(const GroupingScheme& scheme) {
  const std::size_t k = scheme.k();
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < k; ++i) {
    std::string bits(k, '0');
    bits[k - 1 - i] = '1';
    out.emplace_back(scheme.class_names()[i], std::move(bits));
  }
  return out;
}

std::vector<std::pair<std::string, int>> numeric_alphabet(const GroupingScheme& scheme) {
  std::vector<std::pair<std::string, int>> out;
  for (std::size_t i = 0; i < scheme.k(); ++i) out.emplace_back(scheme.class_names()[i], static_cast<int>(i) + 1);
  return out;
}

ToolSchema tool_schema(const GroupingScheme& scheme) {
  return {std::string(kToolName), "Report the single emotion detected in the text.", scheme.class_names()};
}

GrammarDescriptor answer_grammar(PromptStrategy strategy, const GroupingScheme& scheme) {
  GrammarDescriptor g;
  g.k = scheme.k();
  switch (strategy) {
    case PromptStrategy::basic:
      g.kind = GrammarKind::single_label;
      g.vocabulary = scheme.class_names();
      break;
    case PromptStrategy::inverse:
      g.kind = GrammarKind::single_label_inverse;
      g.vocabulary = scheme.class_names();
      break;
    case PromptStrategy::percent:
      g.kind = GrammarKind::percent_object;
      g.vocabulary = scheme.class_names();
      break;
    case PromptStrategy::mask:
      g.kind = GrammarKind::bitstring;
      for (auto& [name, bits] : mask_alphabet(scheme)) g.vocabulary.push_back(bits);
      break;
    case PromptStrategy::numeric:
      g.kind = GrammarKind::integer_code;
      for (auto& [name, code] : numeric_alphabet(scheme)) g.vocabulary.push_back(std::to_string(code));
      break;
  }
  return g;
}

// --- TemplateSet ----------------------------------------------------------

TemplateSet TemplateSet::builtin() {
  TemplateSet set;
  for (std::size_t d = 0; d < kDialectNames.size(); ++d) {
    for (std::size_t s = 0; s < kStrategyNames.size(); ++s) {
      const std::string key =
          "templates/" + std::string(kDialectNames[d]) + "/" + std::string(kStrategyNames[s]) + ".txt";
      const auto text = resources::find(key);
      if (!text) throw std::logic_error("missing built-in template " + key);
      set.text_[d][s] = strip_final_newline(std::string(*text));
    }
  }
  return set;
}

TemplateSet TemplateSet::load_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw ConfigError("template directory '" + dir.string() + "' does not exist");
  }
  TemplateSet set = builtin();
  for (std::size_t d = 0; d < kDialectNames.size(); ++d) {
    for (std::size_t s = 0; s < kStrategyNames.size(); ++s) {
      const auto path = dir / std::string(kDialectNames[d]) / (std::string(kStrategyNames[s]) + ".txt");
      if (!std::filesystem::exists(path)) continue;
      std::ifstream in(path, std::ios::binary);
      std::ostringstream buf;
      buf << in.rdbuf();
      set.text_[d][s] = strip_final_newline(buf.str());
    }
  }
  return set;
}

const std::string& TemplateSet::get(DialectKind dialect, PromptStrategy strategy) const {
  return text_[idx(dialect)][idx(strategy)];
}

void TemplateSet::set(DialectKind dialect, PromptStrategy strategy, std::string text) {
  text_[idx(dialect)][idx(strategy)] = strip_final_newline(std::move(text));
}

// --- rendering ------------------------------------------------------------

PromptRenderer::PromptRenderer() : PromptRenderer(TemplateSet::builtin(), Involution::default_pairing()) {}

PromptRenderer::PromptRenderer(TemplateSet templates, Involution involution)
    : templates_(std::move(templates)), involution_(involution) {}

RenderedPrompt PromptRenderer::render(PromptStrategy strategy, const ModelDialect& dialect,
                                      const GroupingScheme& scheme, std::string_view sentence) const {
  std::vector<std::string> masks, codes;
  for (const auto& [name, bits] : mask_alphabet(scheme)) masks.push_back(name + " = " + bits);
  for (const auto& [name, code] : numeric_alphabet(scheme)) codes.push_back(name + " = " + std::to_string(code));

  const std::vector<std::pair<std::string_view, std::string>> values = {
      {"sentence", std::string(sentence)},
      {"class_list", join(scheme.class_names(), ", ")},
      {"class_alternatives", alternatives(scheme.class_names())},
      {"class_count", std::to_string(scheme.k())},
      {"group_definitions", group_definitions(scheme)},
      {"mask_table", join(masks, ", ")},
      {"numeric_table", join(codes, ", ")},
      {"inverse_pairs", inverse_pairs(involution_)},
  };

  RenderedPrompt prompt;
  prompt.segments = split_segments(substitute(templates_.get(dialect.kind, strategy), values));
  prompt.answer_grammar = answer_grammar(strategy, scheme);
  prompt.strategy = strategy;
  prompt.dialect = dialect.kind;
  prompt.scheme = scheme;
  prompt.sentence = std::string(sentence);
  return prompt;
}

RenderedPrompt render(PromptStrategy strategy, const ModelDialect& dialect, const GroupingScheme& scheme,
                      std::string_view sentence) {
  static const PromptRenderer kDefault;
  return kDefault.render(strategy, dialect, scheme, sentence);
}

std::string extract_sentence(std::string_view user) {
  // header-delimited: <|start_header_id|> user <|end_header_id|>TEXT<|eot_id|>
  static constexpr std::string_view kEndHeader = "<|end_header_id|>";
  static constexpr std::string_view kEot = "<|eot_id|>";
  if (const auto h = user.find(kEndHeader); h != std::string_view::npos) {
    const std::size_t begin = h + kEndHeader.size();
    const std::size_t end = user.find(kEot, begin);
    return std::string(user.substr(begin, end == std::string_view::npos ? std::string_view::npos : end - begin));
  }
  static constexpr std::string_view kTriple = "'''";
  if (const auto q = user.find(kTriple); q != std::string_view::npos) {
    const std::size_t begin = q + kTriple.size();
    const std::size_t end = user.rfind(kTriple);
    if (end != std::string_view::npos && end >= begin) return std::string(user.substr(begin, end - begin));
  }
  return std::string(user);
}

}  // namespace emobench
