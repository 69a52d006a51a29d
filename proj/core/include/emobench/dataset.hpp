#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emobench/taxonomy.hpp"

namespace emobench {

struct Sample {
  std::uint64_t id = 0;
  std::string text;
  Emotion gold = Emotion::sadness;

  bool operator==(const Sample&) const = default;
};

enum class LabelFormat {
  integer_coded,  // 0=sadness ... 5=surprise
  name_coded,     // canonical names, any case
  automatic,      // per row: all digits -> integer, otherwise name
};

struct RowError {
  std::size_t line = 0;  // 1-based physical line where the record starts
  std::string message;
};

struct LoadResult {
  std::vector<Sample> samples;
  std::vector<RowError> errors;
  std::size_t data_rows = 0;  // == samples.size() + errors.size()
};

/// Reads a `text,label` CSV (header required, RFC 4180 quoting). Unknown
/// labels and empty texts become row errors; structural problems (missing
/// header, unterminated quote, wrong column count) throw DatasetError.
LoadResult load_csv(const std::filesystem::path& path, LabelFormat format);
LoadResult parse_csv(std::string_view content, LabelFormat format);

/// Serialises samples in the same schema load_csv reads.
std::string to_csv(std::span<const Sample> samples, LabelFormat format);

enum class SplitStrategy { head_tail, stratified_random };

struct SplitSpec {
  std::size_t finetune_size = 2000;
  std::size_t eval_size = 16000;
  std::uint64_t seed = 0;
  SplitStrategy strategy = SplitStrategy::head_tail;
};

struct Split {
  std::vector<Sample> finetune;
  std::vector<Sample> eval;
};

/// head_tail: the first finetune_size rows, then the next eval_size rows.
/// stratified_random: per-class proportional draws, determined by the seed
/// and independent of input order; both parts come back sorted by id.
/// Throws ConfigError when the sizes are zero or exceed the corpus.
Split split(std::span<const Sample> samples, const SplitSpec& spec);

/// Counts per canonical label, in canonical order.
LabelDistribution class_histogram(std::span<const Sample> samples);

/// Samples whose gold label the scheme maps, order preserved.
std::vector<Sample> filter_for_scheme(std::span<const Sample> samples, const GroupingScheme& scheme);

/// Size-n subset whose per-class counts are within one of the exact
/// proportional share (largest-remainder allocation). Sorted by id.
/// Throws ConfigError when n is 0 or exceeds the corpus.
std::vector<Sample> stratified_subsample(std::span<const Sample> samples, std::size_t n, std::uint64_t seed);

/// Largest-remainder (Hamilton) apportionment of n seats over `weights`.
/// Ties on the remainder go to the lower index.
std::vector<std::size_t> proportional_allocation(std::span<const std::uint64_t> weights, std::size_t n);

/// Deterministic synthetic corpus. Each block lists per-label counts in
/// canonical order and is emitted contiguously (shuffled within the block),
/// so head_tail splits on block boundaries reproduce the block histograms.
std::vector<Sample> make_synthetic_corpus(std::span<const std::array<std::uint64_t, kEmotionCount>> blocks,
                                          std::uint64_t seed);

/// Class counts of the published fine-tuning (2000) and evaluation (16000) partitions.
inline constexpr std::array<std::uint64_t, kEmotionCount> kFinetuneCounts = {581, 695, 159, 275, 224, 66};
inline constexpr std::array<std::uint64_t, kEmotionCount> kEvaluationCounts = {4666, 5362, 1304, 2159, 1937, 572};

}  // namespace emobench
