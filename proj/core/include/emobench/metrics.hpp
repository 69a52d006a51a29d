#pragma once

// Confusion matrices, classification metrics and the three delta reports
// (model family, prompt pair, grouping pair).

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emobench/normalizer.hpp"
#include "emobench/prompt.hpp"
#include "emobench/taxonomy.hpp"

namespace emobench {

inline constexpr std::size_t kFailureKinds = 4;

/// Index of a failure kind in the per-row failure tallies. Throws
/// std::invalid_argument for OutcomeKind::parsed.
std::size_t failure_index(OutcomeKind kind);
OutcomeKind failure_kind(std::size_t index);

/// Rows are gold classes, columns predicted classes. Failures are tallied per
/// gold row and kind, outside the k x k cells.
class ConfusionMatrix {
 public:
  using FailureRow = std::array<std::uint64_t, kFailureKinds>;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::vector<std::string> classes);

  std::size_t k() const { return classes_.size(); }
  const std::vector<std::string>& classes() const { return classes_; }

  std::uint64_t at(std::size_t gold, std::size_t predicted) const { return cells_[gold * k() + predicted]; }
  void add(std::size_t gold, std::size_t predicted, std::uint64_t n = 1) { cells_[gold * k() + predicted] += n; }
  void add_failure(std::size_t gold, OutcomeKind kind, std::uint64_t n = 1);

  std::uint64_t row_failures(std::size_t gold) const;
  std::uint64_t failures(OutcomeKind kind) const;
  std::uint64_t total_failures() const;
  const FailureRow& failure_row(std::size_t gold) const { return failures_[gold]; }

  std::uint64_t trace() const;
  /// Sum of the k x k cells.
  std::uint64_t mass() const;
  std::uint64_t row_sum(std::size_t gold) const;
  std::uint64_t column_sum(std::size_t predicted) const;

  /// Cellwise sum. Throws std::invalid_argument when the class lists differ.
  void merge(const ConfusionMatrix& other);

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::vector<std::string> classes_;
  std::vector<std::uint64_t> cells_;
  std::vector<FailureRow> failures_;
};

/// Adds one outcome for a sample whose gold class is `gold`. Throws
/// std::logic_error when gold or the parsed class is not a matrix class.
void accumulate(ConfusionMatrix& matrix, std::string_view gold, const ParseOutcome& outcome);

enum class ScoringMode {
  strict,   // failures count as incorrect: in the accuracy and recall denominators
  exclude,  // failures are dropped before scoring
};

enum class Averaging { macro, weighted };

std::string_view scoring_mode_name(ScoringMode m);
std::optional<ScoringMode> scoring_mode_from_name(std::string_view name);
std::string_view averaging_name(Averaging a);
std::optional<Averaging> averaging_from_name(std::string_view name);

struct PerClass {
  double recall = 0;
  double precision = 0;
  double f_score = 0;
  std::uint64_t support = 0;
  std::uint64_t predicted = 0;
};

/// Per-class recall, precision and F. An empty predicted column has
/// precision 0; a class with no support has recall 0.
std::vector<PerClass> per_class(const ConfusionMatrix& m, ScoringMode mode = ScoringMode::strict);

/// All functions below throw std::domain_error when the denominator is zero.
double accuracy(const ConfusionMatrix& m, ScoringMode mode = ScoringMode::strict);
double recall(const ConfusionMatrix& m, Averaging avg = Averaging::macro, ScoringMode mode = ScoringMode::strict);
double precision(const ConfusionMatrix& m, Averaging avg = Averaging::macro, ScoringMode mode = ScoringMode::strict);
double f_score(const ConfusionMatrix& m, Averaging avg = Averaging::macro, ScoringMode mode = ScoringMode::strict);

struct MetricSet {
  double accuracy = 0;
  double recall = 0;
  double precision = 0;
  double f_score = 0;
  Averaging averaging = Averaging::macro;
  double failure_rate = 0;

  bool operator==(const MetricSet&) const = default;
};

MetricSet compute_metrics(const ConfusionMatrix& m, Averaging avg = Averaging::macro,
                          ScoringMode mode = ScoringMode::strict);

enum class DeltaKind { model_family, prompt_pair, grouping_pair };

std::string_view delta_kind_name(DeltaKind k);
std::optional<DeltaKind> delta_kind_from_name(std::string_view name);

struct DeltaReport {
  DeltaKind kind = DeltaKind::model_family;
  std::string lhs;
  std::string rhs;
  MetricSet delta;  // signed; averaging copied from the operands
};

/// Componentwise mean(llm) - mean(pre). Throws std::domain_error on an empty
/// side and std::invalid_argument when averaging modes differ.
DeltaReport delta_models(std::span<const MetricSet> llm, std::span<const MetricSet> pre);

/// metrics[i] - metrics[j]. Throws std::domain_error when i == j or either is absent.
DeltaReport delta_prompts(const std::map<PromptStrategy, MetricSet>& metrics, PromptStrategy i, PromptStrategy j);

/// coarse - fine: the gain of reducing the class space from k to k_coarse.
/// Throws std::domain_error unless k > k_coarse.
DeltaReport delta_groupings(const MetricSet& fine, std::size_t k, const MetricSet& coarse, std::size_t k_coarse);

/// Regroups a six-class matrix under `scheme`. Unmapped gold rows are dropped;
/// predictions of unmapped labels under mapped rows become out_of_vocabulary
/// failures. Throws std::invalid_argument unless the matrix is over the six
/// canonical labels.
ConfusionMatrix group_matrix(const ConfusionMatrix& matrix, const GroupingScheme& scheme);

}  // namespace emobench
