#pragma once

// Post-processing of model replies: dialect-specific cleanup, synonym
// normalisation, and one decoder per answer grammar. Decoders never throw;
// every input maps to exactly one ParseOutcome kind.

#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "emobench/prompt.hpp"
#include "emobench/taxonomy.hpp"

namespace emobench {

enum class OutcomeKind { parsed, ambiguous, out_of_vocabulary, malformed, transport_failure };

std::string_view outcome_kind_name(OutcomeKind k);
std::optional<OutcomeKind> outcome_kind_from_name(std::string_view name);

struct ParseOutcome {
  OutcomeKind kind = OutcomeKind::malformed;
  /// parsed: the class name; out_of_vocabulary: the offending token;
  /// transport_failure: the error description; otherwise empty.
  std::string value;
  std::string raw;

  static ParseOutcome parsed(std::string cls, std::string raw) {
    return {OutcomeKind::parsed, std::move(cls), std::move(raw)};
  }
  static ParseOutcome ambiguous(std::string raw) { return {OutcomeKind::ambiguous, {}, std::move(raw)}; }
  static ParseOutcome out_of_vocabulary(std::string token, std::string raw) {
    return {OutcomeKind::out_of_vocabulary, std::move(token), std::move(raw)};
  }
  static ParseOutcome malformed(std::string raw) { return {OutcomeKind::malformed, {}, std::move(raw)}; }
  static ParseOutcome transport_failure(std::string error) {
    return {OutcomeKind::transport_failure, std::move(error), {}};
  }

  bool ok() const { return kind == OutcomeKind::parsed; }
  bool operator==(const ParseOutcome&) const = default;
};

class SynonymDictionary {
 public:
  SynonymDictionary() = default;
  /// core/data/synonyms.txt, compiled in.
  static SynonymDictionary builtin();
  /// `synonym,label` per line, `#` comments, blank lines ignored. Throws
  /// ConfigError naming the line on a bad entry or a conflicting duplicate.
  static SynonymDictionary parse(std::string_view content);
  static SynonymDictionary load(const std::filesystem::path& path);

  void add(std::string word, Emotion label);
  std::optional<Emotion> lookup(std::string_view word) const;
  const std::map<std::string, Emotion, std::less<>>& entries() const { return entries_; }

 private:
  std::map<std::string, Emotion, std::less<>> entries_;
};

/// Canonical label for a lower-case token: its own name or a dictionary synonym.
std::optional<Emotion> normalize_synonym(std::string_view token, const SynonymDictionary& dict);

class CleanupRules {
 public:
  struct Rule {
    std::string pattern;
    std::string replacement;
    std::regex regex;
  };

  CleanupRules() = default;
  static CleanupRules builtin(DialectKind dialect);
  /// `pattern<TAB>replacement` per line; `#` comments and blank lines skipped.
  static CleanupRules parse(std::string_view content);
  static CleanupRules load(const std::filesystem::path& path);

  void add(std::string pattern, std::string replacement);
  const std::vector<Rule>& rules() const { return rules_; }

 private:
  std::vector<Rule> rules_;
};

/// Lower-cases, applies each rule once in order, trims.
std::string cleanup(std::string_view raw, const CleanupRules& rules);

using MaskAlphabet = std::vector<std::pair<std::string, std::string>>;
using NumericAlphabet = std::vector<std::pair<std::string, int>>;

/// First balanced `{...}` (or `[...]` when `open` is '[') region, skipping
/// braces inside JSON strings.
std::optional<std::string_view> find_balanced(std::string_view text, char open, char close);

ParseOutcome parse_basic(std::string_view text, const GroupingScheme& scheme, const SynonymDictionary& dict);
ParseOutcome parse_mask(std::string_view text, const MaskAlphabet& alphabet);
ParseOutcome parse_percent(std::string_view text, const GroupingScheme& scheme, const SynonymDictionary& dict);
ParseOutcome parse_numeric(std::string_view text, const NumericAlphabet& alphabet);
/// parse_basic, then mapped back through the involution so the outcome names
/// the emotion of the text rather than the inverse the model stated.
ParseOutcome parse_inverse(std::string_view text, const GroupingScheme& scheme, const SynonymDictionary& dict,
                           const Involution& inv);

/// Bundles the dictionary, per-dialect cleanup rules and involution, and
/// dispatches on the prompt's answer grammar.
class ResponseNormalizer {
 public:
  ResponseNormalizer();
  ResponseNormalizer(SynonymDictionary dict, std::map<DialectKind, CleanupRules> rules, Involution inv);

  ParseOutcome decode(std::string_view raw, const RenderedPrompt& prompt) const;
  ParseOutcome decode(std::string_view raw, DialectKind dialect, GrammarKind grammar,
                      const GroupingScheme& scheme) const;

  const SynonymDictionary& dictionary() const { return dict_; }
  const CleanupRules& rules_for(DialectKind d) const;

 private:
  SynonymDictionary dict_;
  std::map<DialectKind, CleanupRules> rules_;
  Involution inv_;
};

}  // namespace emobench
