#include "emobench/taxonomy.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "emobench/errors.hpp"

namespace emobench {
namespace {

constexpr std::array<std::string_view, kEmotionCount> kNames = {"sadness", "joy",  "love",
                                                                 "anger",   "fear", "surprise"};

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

const std::array<Emotion, kEmotionCount>& canonical_labels() {
  static constexpr std::array<Emotion, kEmotionCount> kLabels = {
      Emotion::sadness, Emotion::joy, Emotion::love, Emotion::anger, Emotion::fear, Emotion::surprise};
  return kLabels;
}

std::string_view label_name(Emotion e) { return kNames[label_id(e)]; }

std::optional<Emotion> label_from_name(std::string_view name) {
  const std::string key = lowercase(trim(name));
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == key) return static_cast<Emotion>(i);
  }
  return std::nullopt;
}

std::optional<Emotion> label_from_code(long long code) {
  if (code < 0 || code >= static_cast<long long>(kEmotionCount)) return std::nullopt;
  return static_cast<Emotion>(code);
}

// --- GroupingScheme -------------------------------------------------------

GroupingScheme::GroupingScheme(std::vector<Group> groups) : groups_(std::move(groups)) {
  if (groups_.empty()) throw ConfigError("grouping scheme needs at least one class");
  for (std::size_t c = 0; c < groups_.size(); ++c) {
    Group& g = groups_[c];
    g.name = lowercase(trim(g.name));
    if (g.name.empty()) throw ConfigError("grouping scheme class names must be non-empty");
    if (std::find(names_.begin(), names_.end(), g.name) != names_.end()) {
      throw ConfigError("duplicate class name '" + g.name + "' in grouping scheme");
    }
    if (g.members.empty()) throw ConfigError("class '" + g.name + "' has no member emotions");
    for (Emotion e : g.members) {
      auto& slot = mapping_[label_id(e)];
      if (slot) {
        throw ConfigError("emotion '" + std::string(label_name(e)) + "' is mapped to two classes");
      }
      slot = c;
    }
    names_.push_back(g.name);
  }
}

std::optional<std::size_t> GroupingScheme::index_of(std::string_view class_name) const {
  auto it = std::find(names_.begin(), names_.end(), class_name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names_.begin());
}

std::vector<Emotion> GroupingScheme::mapped_labels() const {
  std::vector<Emotion> out;
  for (Emotion e : canonical_labels()) {
    if (maps(e)) out.push_back(e);
  }
  return out;
}

bool GroupingScheme::is_identity() const {
  if (k() != kEmotionCount) return false;
  for (std::size_t i = 0; i < kEmotionCount; ++i) {
    const Group& g = groups_[i];
    if (g.members.size() != 1 || label_id(g.members.front()) != i || g.name != kNames[i]) return false;
  }
  return true;
}

GroupingScheme scheme_for(int k) {
  using E = Emotion;
  switch (k) {
    case 6: {
      std::vector<GroupingScheme::Group> groups;
      for (Emotion e : canonical_labels()) groups.push_back({std::string(label_name(e)), {e}});
      return GroupingScheme(std::move(groups));
    }
    case 3:
      return GroupingScheme({{"positive", {E::love}}, {"negative", {E::fear}}, {"neutral", {E::surprise}}});
    case 2:
      return GroupingScheme({{"positive", {E::joy, E::love}}, {"negative", {E::anger, E::sadness}}});
    default:
      throw ConfigError("unsupported class count " + std::to_string(k) + " (valid: 6, 3, 2)");
  }
}

std::optional<std::string> group_label(const GroupingScheme& scheme, Emotion label) {
  if (auto c = scheme.class_of(label)) return scheme.class_names()[*c];
  return std::nullopt;
}

bool is_refinement(const GroupingScheme& fine, const GroupingScheme& coarse) {
  for (const auto& group : fine.groups()) {
    std::optional<std::size_t> target;
    for (Emotion e : group.members) {
      const auto c = coarse.class_of(e);
      if (!c) continue;
      if (target && *target != *c) return false;
      target = c;
    }
  }
  return true;
}

// --- LabelDistribution ----------------------------------------------------

LabelDistribution::LabelDistribution(std::vector<std::string> classes, std::vector<std::uint64_t> counts)
    : classes_(std::move(classes)), counts_(std::move(counts)) {
  if (classes_.size() != counts_.size()) {
    throw std::invalid_argument("label distribution: class and count vectors differ in length");
  }
  total_ = std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

LabelDistribution LabelDistribution::over_labels(const std::array<std::uint64_t, kEmotionCount>& counts) {
  std::vector<std::string> names;
  for (Emotion e : canonical_labels()) names.emplace_back(label_name(e));
  return LabelDistribution(std::move(names), {counts.begin(), counts.end()});
}

std::uint64_t LabelDistribution::count(std::string_view class_name) const {
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (classes_[i] == class_name) return counts_[i];
  }
  return 0;
}

double LabelDistribution::probability(std::size_t i) const {
  if (total_ == 0) throw std::domain_error("probability of an empty distribution");
  return static_cast<double>(counts_.at(i)) / static_cast<double>(total_);
}

double entropy(const LabelDistribution& dist) {
  if (dist.total() == 0) throw std::domain_error("entropy of an empty distribution");
  const double total = static_cast<double>(dist.total());
  double h = 0.0;
  for (std::uint64_t c : dist.counts()) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    h -= p * std::log2(p);
  }
  return h;
}

namespace {

std::array<std::uint64_t, kEmotionCount> label_counts(const LabelDistribution& dist) {
  std::array<std::uint64_t, kEmotionCount> counts{};
  for (std::size_t i = 0; i < dist.classes().size(); ++i) {
    const auto e = label_from_name(dist.classes()[i]);
    if (!e) {
      throw std::invalid_argument("distribution class '" + dist.classes()[i] + "' is not a canonical emotion");
    }
    counts[label_id(*e)] += dist.counts()[i];
  }
  return counts;
}

}  // namespace

LabelDistribution induced_distribution(const GroupingScheme& scheme, const LabelDistribution& dist) {
  const auto counts = label_counts(dist);
  std::vector<std::uint64_t> grouped(scheme.k(), 0);
  for (Emotion e : canonical_labels()) {
    if (auto c = scheme.class_of(e)) grouped[*c] += counts[label_id(e)];
  }
  return LabelDistribution(scheme.class_names(), std::move(grouped));
}

LabelDistribution restrict_to_mapped(const GroupingScheme& scheme, const LabelDistribution& dist) {
  const auto counts = label_counts(dist);
  std::vector<std::string> names;
  std::vector<std::uint64_t> kept;
  for (Emotion e : scheme.mapped_labels()) {
    names.emplace_back(label_name(e));
    kept.push_back(counts[label_id(e)]);
  }
  return LabelDistribution(std::move(names), std::move(kept));
}

// --- Involution -----------------------------------------------------------

Involution Involution::default_pairing() {
  using E = Emotion;
  return from_pairs({{E::joy, E::sadness}, {E::love, E::anger}, {E::fear, E::surprise}});
}

Involution Involution::from_pairs(const std::vector<std::pair<Emotion, Emotion>>& pairs) {
  Involution inv;
  std::array<bool, kEmotionCount> seen{};
  for (Emotion e : canonical_labels()) inv.table_[label_id(e)] = e;
  for (const auto& [a, b] : pairs) {
    if (seen[label_id(a)] || seen[label_id(b)]) {
      throw ConfigError("involution pairs '" + std::string(label_name(a)) + "' or '" +
                        std::string(label_name(b)) + "' more than once");
    }
    seen[label_id(a)] = seen[label_id(b)] = true;
    inv.table_[label_id(a)] = b;
    inv.table_[label_id(b)] = a;
  }
  return inv;
}

std::vector<std::pair<Emotion, Emotion>> Involution::pairs() const {
  std::vector<std::pair<Emotion, Emotion>> out;
  for (Emotion e : canonical_labels()) {
    const Emotion partner = (*this)(e);
    if (label_id(e) <= label_id(partner)) out.emplace_back(e, partner);
  }
  return out;
}

}  // namespace emobench
