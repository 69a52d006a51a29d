#pragma once

// Canonical emotion labels, grouping schemes over them, the inverse-emotion
// involution and the entropy/refinement helpers used to reason about
// coarser label spaces.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace emobench {

enum class Emotion : std::uint8_t { sadness = 0, joy, love, anger, fear, surprise };

inline constexpr std::size_t kEmotionCount = 6;

/// The six labels in canonical order (sadness first, surprise last).
const std::array<Emotion, kEmotionCount>& canonical_labels();

constexpr std::size_t label_id(Emotion e) { return static_cast<std::size_t>(e); }
std::string_view label_name(Emotion e);

/// Case-insensitive lookup of a canonical name; surrounding whitespace ignored.
std::optional<Emotion> label_from_name(std::string_view name);
/// Integer encoding 0=sadness ... 5=surprise.
std::optional<Emotion> label_from_code(long long code);

/// A partial map from canonical labels onto k named output classes.
///
/// Labels that belong to no group are "unmapped": samples carrying them are
/// excluded from evaluation under the scheme. Groups keep their member order
/// as declared, which is what prompts print ("joy/love").
class GroupingScheme {
 public:
  struct Group {
    std::string name;
    std::vector<Emotion> members;
    bool operator==(const Group&) const = default;
  };

  /// Throws ConfigError unless every group is non-empty, names are unique,
  /// and no label appears in two groups.
  explicit GroupingScheme(std::vector<Group> groups);

  std::size_t k() const { return groups_.size(); }
  const std::vector<Group>& groups() const { return groups_; }
  const std::vector<std::string>& class_names() const { return names_; }

  std::optional<std::size_t> class_of(Emotion e) const { return mapping_[label_id(e)]; }
  std::optional<std::size_t> index_of(std::string_view class_name) const;
  bool maps(Emotion e) const { return mapping_[label_id(e)].has_value(); }
  /// Mapped labels in canonical order.
  std::vector<Emotion> mapped_labels() const;
  bool is_identity() const;

  bool operator==(const GroupingScheme& other) const { return groups_ == other.groups_; }

 private:
  std::vector<Group> groups_;
  std::vector<std::string> names_;
  std::array<std::optional<std::size_t>, kEmotionCount> mapping_{};
};

/// The built-in schemes for k in {6, 3, 2}. Throws ConfigError otherwise.
GroupingScheme scheme_for(int k);

std::optional<std::string> group_label(const GroupingScheme& scheme, Emotion label);

/// True iff each class of `fine`, restricted to the labels both schemes map,
/// falls inside a single class of `coarse`.
bool is_refinement(const GroupingScheme& fine, const GroupingScheme& coarse);

/// Non-negative counts over named classes.
class LabelDistribution {
 public:
  LabelDistribution() = default;
  LabelDistribution(std::vector<std::string> classes, std::vector<std::uint64_t> counts);

  /// Distribution over the canonical labels, in canonical order.
  static LabelDistribution over_labels(const std::array<std::uint64_t, kEmotionCount>& counts);

  const std::vector<std::string>& classes() const { return classes_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }
  std::uint64_t total() const { return total_; }
  std::uint64_t count(std::string_view class_name) const;
  double probability(std::size_t i) const;

  bool operator==(const LabelDistribution&) const = default;

 private:
  std::vector<std::string> classes_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

/// Shannon entropy in bits. Throws std::domain_error when total is zero.
double entropy(const LabelDistribution& dist);

/// Counts of a canonical-label distribution summed per class of `scheme`;
/// unmapped labels are dropped.
LabelDistribution induced_distribution(const GroupingScheme& scheme, const LabelDistribution& dist);

/// The canonical-label distribution restricted to the labels `scheme` maps.
LabelDistribution restrict_to_mapped(const GroupingScheme& scheme, const LabelDistribution& dist);

/// Self-inverse pairing of the canonical labels used by the inverse prompt.
class Involution {
 public:
  /// joy<->sadness, love<->anger, fear<->surprise. The pairing is a project
  /// convention; nothing upstream fixes it.
  static Involution default_pairing();
  /// Unlisted labels map to themselves. Throws ConfigError if a label is
  /// paired twice.
  static Involution from_pairs(const std::vector<std::pair<Emotion, Emotion>>& pairs);

  Emotion operator()(Emotion e) const { return table_[label_id(e)]; }
  /// Unordered pairs in canonical order of their first element; fixed points
  /// appear as (e, e).
  std::vector<std::pair<Emotion, Emotion>> pairs() const;

  bool operator==(const Involution&) const = default;

 private:
  std::array<Emotion, kEmotionCount> table_{};
};

inline Emotion inverse_emotion(Emotion label, const Involution& inv) { return inv(label); }

}  // namespace emobench
