#pragma once

// Prompt rendering for the five answer formats (basic, mask, percent,
// numeric, inverse) across three model dialects.

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "emobench/taxonomy.hpp"

namespace emobench {

enum class PromptStrategy { basic, mask, percent, numeric, inverse };

const std::array<PromptStrategy, 5>& all_strategies();
std::string_view strategy_name(PromptStrategy s);
std::optional<PromptStrategy> strategy_from_name(std::string_view name);

enum class DialectKind {
  plain_instruct,    // bare instruction lines, sentence on its own line
  quoted_input,      // sentence wrapped in triple quotes
  header_delimited,  // <|start_header_id|>role<|end_header_id|> ... <|eot_id|> segments
};

std::string_view dialect_name(DialectKind d);
std::optional<DialectKind> dialect_from_name(std::string_view name);

struct ModelDialect {
  DialectKind kind = DialectKind::plain_instruct;
  std::string name;  // free-form tag, e.g. the model family
};

enum class Role { system, user };
std::string_view role_name(Role r);

struct Segment {
  Role role = Role::user;
  std::string content;
  bool operator==(const Segment&) const = default;
};

enum class GrammarKind { single_label, bitstring, percent_object, integer_code, single_label_inverse };

std::string_view grammar_kind_name(GrammarKind g);
std::optional<GrammarKind> grammar_kind_from_name(std::string_view name);

/// What a well-formed answer looks like: the kind plus its accepted surface forms.
struct GrammarDescriptor {
  GrammarKind kind = GrammarKind::single_label;
  std::size_t k = 0;
  std::vector<std::string> vocabulary;
  bool operator==(const GrammarDescriptor&) const = default;
};

/// Function-calling schema: one required string argument `emotion`
/// restricted to the scheme's class names.
struct ToolSchema {
  std::string name;
  std::string description;
  std::vector<std::string> emotion_values;
};

inline constexpr std::string_view kToolName = "report_emotion";

struct RenderedPrompt {
  std::vector<Segment> segments;
  GrammarDescriptor answer_grammar;
  PromptStrategy strategy = PromptStrategy::basic;
  DialectKind dialect = DialectKind::plain_instruct;
  GroupingScheme scheme = scheme_for(6);
  std::string sentence;

  int scheme_k() const { return static_cast<int>(scheme.k()); }
  /// Segment contents joined by newlines: the exact text a completion
  /// endpoint receives.
  std::string flat() const;
};

/// One-hot masks, class i (scheme order) sets the i-th bit from the right:
/// sadness -> 000001, surprise -> 100000 for the identity scheme.
std::vector<std::pair<std::string, std::string>> mask_alphabet(const GroupingScheme& scheme);

/// Class i (scheme order) -> i + 1.
std::vector<std::pair<std::string, int>> numeric_alphabet(const GroupingScheme& scheme);

ToolSchema tool_schema(const GroupingScheme& scheme);

GrammarDescriptor answer_grammar(PromptStrategy strategy, const GroupingScheme& scheme);

/// The 15 (dialect x strategy) templates. Template syntax:
///   - `{{name}}` placeholders, substituted in one pass (inserted text is
///     never re-scanned);
///   - a line consisting of `@user` separates the system segment from the
///     user segment;
///   - a single trailing newline at end of file is ignored.
class TemplateSet {
 public:
  static TemplateSet builtin();
  /// Reads `<dir>/<dialect>/<strategy>.txt`; files that are absent fall back
  /// to the built-in text.
  static TemplateSet load_dir(const std::filesystem::path& dir);

  const std::string& get(DialectKind dialect, PromptStrategy strategy) const;
  void set(DialectKind dialect, PromptStrategy strategy, std::string text);

 private:
  std::array<std::array<std::string, 5>, 3> text_;
};

class PromptRenderer {
 public:
  PromptRenderer();
  PromptRenderer(TemplateSet templates, Involution involution);

  /// Pure: identical inputs give byte-identical prompts.
  RenderedPrompt render(PromptStrategy strategy, const ModelDialect& dialect, const GroupingScheme& scheme,
                        std::string_view sentence) const;

  const Involution& involution() const { return involution_; }

 private:
  TemplateSet templates_;
  Involution involution_;
};

/// Convenience wrapper over the built-in templates and default involution.
RenderedPrompt render(PromptStrategy strategy, const ModelDialect& dialect, const GroupingScheme& scheme,
                      std::string_view sentence);

/// The sentence a prompt embeds, recovered from the last user segment: text
/// between the dialect's sentence delimiters, or the whole segment.
std::string extract_sentence(std::string_view user_content);

}  // namespace emobench
