#pragma once

// Experiment planning and execution: a JSON config becomes a validated plan,
// the (backend x strategy x scheme) grid is run cell by cell, and run state
// is persisted under the run directory so interrupted runs can resume.

#include <chrono>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emobench/dataset.hpp"
#include "emobench/gateway.hpp"
#include "emobench/metrics.hpp"
#include "emobench/mock.hpp"
#include "emobench/normalizer.hpp"
#include "emobench/prompt.hpp"
#include "emobench/taxonomy.hpp"

namespace emobench {

struct Subsample {
  std::size_t n = 0;
  std::uint64_t seed = 0;
};

struct DatasetSpec {
  std::filesystem::path path;
  LabelFormat format = LabelFormat::automatic;
  /// When set, only the evaluation part of the split is used.
  std::optional<SplitSpec> split;
  std::optional<Subsample> subsample;
};

struct BackendSpec {
  BackendConfig config;  // config.mock is filled in at execution time
  std::optional<MockBehavior> mock;
  std::string family = "llm";  // grouping for model-family deltas
};

struct ExperimentPlan {
  DatasetSpec dataset;
  std::vector<BackendSpec> backends;
  std::vector<PromptStrategy> strategies;
  std::vector<int> schemes;
  std::map<int, GroupingScheme> scheme_defs;
  RetryPolicy policy;
  int parallelism = 8;
  double rate_limit_rps = 0;
  ScoringMode scoring_mode = ScoringMode::strict;
  Averaging averaging = Averaging::macro;
  std::filesystem::path run_dir;
  Involution involution = Involution::default_pairing();
  std::optional<std::filesystem::path> synonyms_path;
  std::map<DialectKind, std::filesystem::path> cleanup_rules;
  std::optional<std::filesystem::path> templates_dir;

  /// The normalised config with absolute paths; what plan.json stores.
  nlohmann::json canonical;

  const GroupingScheme& scheme(int k) const { return scheme_defs.at(k); }
};

/// Parses and validates a config document. Relative paths resolve against
/// `base_dir`. Throws ConfigError naming the offending key.
ExperimentPlan plan_from_json(const nlohmann::json& config, const std::filesystem::path& base_dir);
ExperimentPlan plan_from_config(const std::filesystem::path& path);

/// SHA-256 over the canonical config (execution knobs excluded: run_dir,
/// parallelism, rate limit) and the dataset file bytes.
std::string plan_fingerprint(const ExperimentPlan& plan);

struct CellKey {
  std::string backend;
  PromptStrategy strategy = PromptStrategy::basic;
  int k = 6;
  auto operator<=>(const CellKey&) const = default;
  std::string describe() const;
};

/// The planned grid in execution order: backends, then strategies, then
/// schemes. The inverse strategy only runs at k = 6.
std::vector<CellKey> plan_cells(const ExperimentPlan& plan);

enum class CellStatus { complete, aborted, interrupted };
std::string_view cell_status_name(CellStatus s);
std::optional<CellStatus> cell_status_from_name(std::string_view name);

struct CellResult {
  CellKey key;
  ConfusionMatrix matrix;
  std::optional<MetricSet> metrics;  // absent when nothing was scored
  CellStatus status = CellStatus::complete;
  std::string note;
  std::uint64_t samples = 0;  // evaluated samples (filtered by scheme)

  bool operator==(const CellResult&) const = default;
};

struct Prediction {
  CellKey key;
  std::uint64_t sample_id = 0;
  std::string gold;
  ParseOutcome outcome;
  int attempts = 0;

  bool operator==(const Prediction&) const = default;
};

struct RunStats {
  double wall_seconds = 0;
  BatchStats batch;
  std::size_t dataset_rows = 0;
  std::size_t dataset_row_errors = 0;
  std::map<std::string, double> cell_seconds;
  std::map<std::string, int> max_in_flight;  // mock backends only
};

struct RunRecord {
  std::string fingerprint;
  std::vector<CellResult> cells;
  std::vector<Prediction> predictions;
  LabelDistribution eval_histogram;
  std::map<int, GroupingScheme> schemes;
  std::map<std::string, std::string> families;
  ScoringMode scoring_mode = ScoringMode::strict;
  Averaging averaging = Averaging::macro;
  bool interrupted = false;
  RunStats stats;  // not part of equality

  bool any_aborted() const;
  /// Compares everything but the timing statistics.
  bool operator==(const RunRecord& other) const;
};

struct ExecuteOptions {
  /// Stop issuing network requests after this many; the run is recorded as
  /// interrupted and can be resumed from the cache.
  std::optional<std::int64_t> max_fresh_requests;
};

/// Runs every cell. Writes plan.json, fingerprint, record.json,
/// predictions.ndjson and run_stats.json under the run directory. Throws
/// FingerprintMismatch when the run directory holds a different plan.
RunRecord execute(const ExperimentPlan& plan, const ExecuteOptions& options = {});

/// Reloads plan.json from the run directory, verifies its fingerprint and
/// executes again; cached replies are not re-requested.
RunRecord resume(const std::filesystem::path& run_dir, const ExecuteOptions& options = {});

nlohmann::json record_to_json(const RunRecord& record);
RunRecord record_from_json(const nlohmann::json& j);
/// record.json plus predictions.ndjson from a run directory.
RunRecord load_record(const std::filesystem::path& run_dir);

nlohmann::json prediction_to_json(const Prediction& p);
Prediction prediction_from_json(const nlohmann::json& j);

}  // namespace emobench
