#include "emobench/normalizer.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "emobench/errors.hpp"
#include "resources.hpp"

namespace emobench {
namespace {

constexpr std::array<std::string_view, 5> kOutcomeNames = {"parsed", "ambiguous", "out_of_vocabulary", "malformed",
                                                           "transport_failure"};

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string read_file(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(std::string("cannot open ") + what + " '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string_view> split_lines(std::string_view content) {
  std::vector<std::string_view> lines;
  while (!content.empty()) {
    const auto nl = content.find('\n');
    auto line = content.substr(0, nl);
    if (line.ends_with('\r')) line.remove_suffix(1);
    lines.push_back(line);
    if (nl == std::string_view::npos) break;
    content.remove_prefix(nl + 1);
  }
  return lines;
}

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    if (std::isalpha(static_cast<unsigned char>(text[i]))) {
      std::size_t j = i;
      while (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j]))) ++j;
      words.push_back(lowercase(text.substr(i, j - i)));
      i = j;
    } else {
      ++i;
    }
  }
  return words;
}

// Lenient JSON: strict first, then with single quotes promoted to double.
std::optional<nlohmann::json> parse_json_lenient(std::string_view region) {
  auto j = nlohmann::json::parse(region, nullptr, false);
  if (!j.is_discarded()) return j;
  std::string swapped(region);
  std::replace(swapped.begin(), swapped.end(), '\'', '"');
  j = nlohmann::json::parse(swapped, nullptr, false);
  if (!j.is_discarded()) return j;
  return std::nullopt;
}

// A token resolved against a scheme: a mapped class index, or a known label
// the scheme leaves unmapped.
struct Resolved {
  std::optional<std::size_t> cls;
  std::optional<Emotion> unmapped;
};

std::optional<Resolved> resolve(std::string_view token, const GroupingScheme& scheme, const SynonymDictionary& dict) {
  if (auto idx = scheme.index_of(token)) return Resolved{idx, std::nullopt};
  if (auto label = normalize_synonym(token, dict)) {
    if (auto idx = scheme.class_of(*label)) return Resolved{idx, std::nullopt};
    return Resolved{std::nullopt, label};
  }
  return std::nullopt;
}

// The candidate answer: a JSON object's `emotion` field, an `emotion: value`
// pair, or the whole text.
std::string basic_candidate(std::string_view text) {
  if (auto region = find_balanced(text, '{', '}')) {
    if (auto j = parse_json_lenient(*region); j && j->is_object() && j->contains("emotion")) {
      const auto& v = (*j)["emotion"];
      if (v.is_string()) return v.get<std::string>();
      if (v.is_array()) {
        std::string joined;
        for (const auto& item : v) {
          if (!item.is_string()) continue;
          if (!joined.empty()) joined += ' ';
          joined += item.get<std::string>();
        }
        return joined;
      }
    }
  }
  static const std::regex kPair(R"(emotion\s*[:=]\s*(.*))", std::regex::ECMAScript | std::regex::icase);
  std::match_results<std::string_view::const_iterator> m;
  if (std::regex_search(text.begin(), text.end(), m, kPair)) return m[1].str();
  return std::string(text);
}

std::optional<double> as_number(const nlohmann::json& v) {
  if (v.is_number()) return v.get<double>();
  if (!v.is_string()) return std::nullopt;
  auto s = trim(v.get_ref<const std::string&>());
  if (s.ends_with('%')) s = trim(s.substr(0, s.size() - 1));
  double out = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return out;
}

}  // namespace

std::string_view outcome_kind_name(OutcomeKind k) { return kOutcomeNames[static_cast<std::size_t>(k)]; }

std::optional<OutcomeKind> outcome_kind_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kOutcomeNames.size(); ++i) {
    if (kOutcomeNames[i] == name) return static_cast<OutcomeKind>(i);
  }
  return std::nullopt;
}

// --- SynonymDictionary ----------------------------------------------------

SynonymDictionary SynonymDictionary::builtin() {
  const auto text = resources::find("data/synonyms.txt");
  if (!text) throw std::logic_error("missing built-in synonym dictionary");
  return parse(*text);
}

SynonymDictionary SynonymDictionary::parse(std::string_view content) {
  if (content.starts_with("\xEF\xBB\xBF")) content.remove_prefix(3);
  SynonymDictionary dict;
  const auto lines = split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = trim(lines[i]);
    if (line.empty() || line.front() == '#') continue;
    const auto where = " at line " + std::to_string(i + 1);
    const auto comma = line.find(',');
    if (comma == std::string_view::npos) throw ConfigError("synonym entry without a comma" + where);
    const auto word = lowercase(trim(line.substr(0, comma)));
    const auto label = label_from_name(line.substr(comma + 1));
    if (word.empty()) throw ConfigError("empty synonym" + where);
    if (!label) throw ConfigError("unknown label '" + std::string(trim(line.substr(comma + 1))) + "'" + where);
    if (auto prev = dict.lookup(word); prev && *prev != *label) {
      throw ConfigError("synonym '" + word + "' mapped to two labels" + where);
    }
    dict.add(word, *label);
  }
  return dict;
}

SynonymDictionary SynonymDictionary::load(const std::filesystem::path& path) {
  return parse(read_file(path, "synonym dictionary"));
}

void SynonymDictionary::add(std::string word, Emotion label) { entries_[lowercase(word)] = label; }

std::optional<Emotion> SynonymDictionary::lookup(std::string_view word) const {
  const auto it = entries_.find(word);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::optional<Emotion> normalize_synonym(std::string_view token, const SynonymDictionary& dict) {
  for (const auto e : canonical_labels()) {
    if (label_name(e) == token) return e;
  }
  return dict.lookup(token);
}

// --- CleanupRules ---------------------------------------------------------

CleanupRules CleanupRules::builtin(DialectKind dialect) {
  const auto key = "data/cleanup/" + std::string(dialect_name(dialect)) + ".rules";
  const auto text = resources::find(key);
  if (!text) throw std::logic_error("missing built-in cleanup rules " + key);
  return parse(*text);
}

CleanupRules CleanupRules::parse(std::string_view content) {
  CleanupRules rules;
  const auto lines = split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = lines[i];
    if (trim(line).empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) {
      throw ConfigError("cleanup rule without a tab separator at line " + std::to_string(i + 1));
    }
    try {
      rules.add(std::string(line.substr(0, tab)), std::string(line.substr(tab + 1)));
    } catch (const std::regex_error& e) {
      throw ConfigError("invalid cleanup pattern at line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return rules;
}

CleanupRules CleanupRules::load(const std::filesystem::path& path) {
  return parse(read_file(path, "cleanup rules"));
}

void CleanupRules::add(std::string pattern, std::string replacement) {
  std::regex re(pattern, std::regex::ECMAScript);
  rules_.push_back(Rule{std::move(pattern), std::move(replacement), std::move(re)});
}

std::string cleanup(std::string_view raw, const CleanupRules& rules) {
  std::string text = lowercase(raw);
  for (const auto& rule : rules.rules()) text = std::regex_replace(text, rule.regex, rule.replacement);
  return std::string(trim(text));
}

// --- decoders -------------------------------------------------------------

std::optional<std::string_view> find_balanced(std::string_view text, char open, char close) {
  const auto start = text.find(open);
  if (start == std::string_view::npos) return std::nullopt;
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == open) {
      ++depth;
    } else if (c == close && --depth == 0) {
      return text.substr(start, i - start + 1);
    }
  }
  return std::nullopt;
}

ParseOutcome parse_basic(std::string_view text, const GroupingScheme& scheme, const SynonymDictionary& dict) {
  std::string raw(text);
  const std::string candidate = basic_candidate(text);
  const auto words = word_tokens(candidate);
  if (words.empty()) return ParseOutcome::malformed(std::move(raw));

  std::set<std::size_t> classes;
  std::set<Emotion> unmapped;
  std::string unmapped_token;
  for (const auto& w : words) {
    const auto r = resolve(w, scheme, dict);
    if (!r) continue;
    if (r->cls) {
      classes.insert(*r->cls);
    } else if (unmapped.insert(*r->unmapped).second) {
      unmapped_token = w;
    }
  }
  if (classes.size() + unmapped.size() >= 2) return ParseOutcome::ambiguous(std::move(raw));
  if (classes.size() == 1) return ParseOutcome::parsed(scheme.class_names()[*classes.begin()], std::move(raw));
  if (unmapped.size() == 1) return ParseOutcome::out_of_vocabulary(unmapped_token, std::move(raw));
  // A lone unknown word is an out-of-vocabulary answer; prose without any
  // label is a format violation.
  if (words.size() == 1) return ParseOutcome::out_of_vocabulary(words.front(), std::move(raw));
  return ParseOutcome::malformed(std::move(raw));
}

ParseOutcome parse_mask(std::string_view text, const MaskAlphabet& alphabet) {
  std::string raw(text);
  if (alphabet.empty()) return ParseOutcome::malformed(std::move(raw));
  const std::size_t k = alphabet.front().second.size();

  std::set<std::string_view> runs;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '0' && text[i] != '1') {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && (text[j] == '0' || text[j] == '1')) ++j;
    if (j - i == k) runs.insert(text.substr(i, k));
    i = j;
  }
  if (runs.empty()) return ParseOutcome::malformed(std::move(raw));
  if (runs.size() > 1) return ParseOutcome::ambiguous(std::move(raw));

  const auto bits = *runs.begin();
  for (const auto& [cls, mask] : alphabet) {
    if (mask == bits) return ParseOutcome::parsed(cls, std::move(raw));
  }
  if (std::count(bits.begin(), bits.end(), '1') >= 2) return ParseOutcome::ambiguous(std::move(raw));
  return ParseOutcome::malformed(std::move(raw));
}

ParseOutcome parse_percent(std::string_view text, const GroupingScheme& scheme, const SynonymDictionary& dict) {
  std::string raw(text);
  const auto obj = find_balanced(text, '{', '}');
  const auto arr = find_balanced(text, '[', ']');
  std::optional<std::string_view> region = obj;
  if (arr && (!obj || arr->data() < obj->data())) region = arr;
  if (!region) return ParseOutcome::malformed(std::move(raw));
  auto parsed = parse_json_lenient(*region);
  if (!parsed && region == arr && obj) parsed = parse_json_lenient(*obj);
  if (!parsed) return ParseOutcome::malformed(std::move(raw));

  // Flatten to (key, value) pairs. Arrays may hold single-entry objects or
  // {"emotion": name, "percentage": value} records.
  std::vector<std::pair<std::string, nlohmann::json>> entries;
  auto collect = [&](const nlohmann::json& o) {
    if (!o.is_object()) return;
    if (o.contains("emotion") && o["emotion"].is_string()) {
      for (const char* key : {"percentage", "percent", "probability", "score", "value"}) {
        if (o.contains(key)) {
          entries.emplace_back(o["emotion"].get<std::string>(), o[key]);
          return;
        }
      }
    }
    for (const auto& [key, value] : o.items()) entries.emplace_back(key, value);
  };
  if (parsed->is_array()) {
    for (const auto& item : *parsed) collect(item);
  } else {
    collect(*parsed);
  }

  std::vector<double> mass(scheme.k(), 0.0);
  std::vector<bool> seen(scheme.k(), false);
  for (const auto& [key, value] : entries) {
    const auto num = as_number(value);
    if (!num) continue;
    const auto r = resolve(lowercase(trim(key)), scheme, dict);
    if (!r || !r->cls) continue;
    mass[*r->cls] += *num;
    seen[*r->cls] = true;
  }
  std::optional<std::size_t> best;
  bool tie = false;
  for (std::size_t c = 0; c < mass.size(); ++c) {
    if (!seen[c]) continue;
    if (!best || mass[c] > mass[*best]) {
      best = c;
      tie = false;
    } else if (mass[c] == mass[*best]) {
      tie = true;
    }
  }
  if (!best) return ParseOutcome::malformed(std::move(raw));
  if (tie) return ParseOutcome::ambiguous(std::move(raw));
  return ParseOutcome::parsed(scheme.class_names()[*best], std::move(raw));
}

ParseOutcome parse_numeric(std::string_view text, const NumericAlphabet& alphabet) {
  std::string raw(text);
  const auto start = std::find_if(text.begin(), text.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
  if (start == text.end()) return ParseOutcome::malformed(std::move(raw));
  const auto stop = std::find_if(start, text.end(), [](char c) { return !std::isdigit(static_cast<unsigned char>(c)); });
  const std::string token(start, stop);
  int value = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec == std::errc{} && ptr == token.data() + token.size()) {
    for (const auto& [cls, code] : alphabet) {
      if (code == value) return ParseOutcome::parsed(cls, std::move(raw));
    }
  }
  return ParseOutcome::out_of_vocabulary(token, std::move(raw));
}

ParseOutcome parse_inverse(std::string_view text, const GroupingScheme& scheme, const SynonymDictionary& dict,
                           const Involution& inv) {
  // Decode against the identity scheme first: the model names a canonical
  // label, and the involution is defined on those.
  static const GroupingScheme identity = scheme_for(6);
  auto outcome = parse_basic(text, identity, dict);
  if (!outcome.ok()) return outcome;
  const auto stated = label_from_name(outcome.value);
  const Emotion meant = inv(*stated);
  if (auto cls = scheme.class_of(meant)) return ParseOutcome::parsed(scheme.class_names()[*cls], std::move(outcome.raw));
  return ParseOutcome::out_of_vocabulary(std::string(label_name(meant)), std::move(outcome.raw));
}

// --- ResponseNormalizer ---------------------------------------------------

ResponseNormalizer::ResponseNormalizer()
    : dict_(SynonymDictionary::builtin()), inv_(Involution::default_pairing()) {
  for (const auto d : {DialectKind::plain_instruct, DialectKind::quoted_input, DialectKind::header_delimited}) {
    rules_.emplace(d, CleanupRules::builtin(d));
  }
}

ResponseNormalizer::ResponseNormalizer(SynonymDictionary dict, std::map<DialectKind, CleanupRules> rules,
                                       Involution inv)
    : dict_(std::move(dict)), rules_(std::move(rules)), inv_(inv) {
  for (const auto d : {DialectKind::plain_instruct, DialectKind::quoted_input, DialectKind::header_delimited}) {
    if (!rules_.contains(d)) rules_.emplace(d, CleanupRules::builtin(d));
  }
}

const CleanupRules& ResponseNormalizer::rules_for(DialectKind d) const { return rules_.at(d); }

ParseOutcome ResponseNormalizer::decode(std::string_view raw, const RenderedPrompt& prompt) const {
  return decode(raw, prompt.dialect, prompt.answer_grammar.kind, prompt.scheme);
}

ParseOutcome ResponseNormalizer::decode(std::string_view raw, DialectKind dialect, GrammarKind grammar,
                                        const GroupingScheme& scheme) const {
  const std::string text = cleanup(raw, rules_for(dialect));
  ParseOutcome out;
  switch (grammar) {
    case GrammarKind::single_label:
      out = parse_basic(text, scheme, dict_);
      break;
    case GrammarKind::bitstring:
      out = parse_mask(text, mask_alphabet(scheme));
      break;
    case GrammarKind::percent_object:
      out = parse_percent(text, scheme, dict_);
      break;
    case GrammarKind::integer_code:
      out = parse_numeric(text, numeric_alphabet(scheme));
      break;
    case GrammarKind::single_label_inverse:
      out = parse_inverse(text, scheme, dict_, inv_);
      break;
  }
  out.raw = std::string(raw);
  return out;
}

}  // namespace emobench
