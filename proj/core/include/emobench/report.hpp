#pragma once

// Report files for a run: canonical report.json, the metrics table, one
// confusion matrix per cell (CSV and SVG), delta tables and per-scheme
// entropies. Values are stored in [0,1] and scaled to percent only here.

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emobench/metrics.hpp"
#include "emobench/runner.hpp"

namespace emobench {

/// v * 100 with two decimals: 0.82264 -> "82.26".
std::string percent(double v);

struct DeltaRow {
  DeltaReport report;
  std::string context;  // e.g. "backend=gpt;k=6"
};

struct SchemeEntropy {
  int k = 0;
  LabelDistribution distribution;
  double bits = 0;
};

/// Evaluation-set class distribution induced under each scheme of the run.
std::vector<SchemeEntropy> scheme_entropies(const RunRecord& record);

/// Deltas computable inside one run: prompt pairs per (backend, k), grouping
/// pairs per (backend, strategy), and model families per (strategy, k) when
/// the run has backends from more than one family.
std::vector<DeltaRow> run_deltas(const RunRecord& record, DeltaKind kind);

/// Cross-run deltas, always oriented a - b:
///   model-family: pooled metrics of a's backends vs b's per (strategy, k);
///   prompt-pair: each run holds one strategy; per (backend, k);
///   grouping-pair: each run holds one scheme; per (backend, strategy).
/// Throws ConfigError when the grids give nothing to compare.
std::vector<DeltaRow> compare_runs(const RunRecord& a, const RunRecord& b, DeltaKind kind);

nlohmann::json report_json(const RunRecord& record);
/// Byte-stable rendering of report_json (sorted keys, two-space indent).
std::string to_json(const RunRecord& record);

/// Header `strategy,model,k,accuracy,recall,precision,f_score,failure_rate`;
/// rows ordered by strategy, then model in run order, then k.
std::string metrics_csv(const RunRecord& record);
/// Gold rows, predicted columns, then one failure column.
std::string confusion_csv(const ConfusionMatrix& matrix);
std::string deltas_csv(const std::vector<DeltaRow>& rows);

/// Standalone SVG heatmap; shading is row-normalised over the row's cells and
/// failures, a row without samples stays unshaded.
std::string render_confusion_svg(const ConfusionMatrix& matrix, const std::string& title);

enum class ReportFormat { json, csv, svg, all };
std::optional<ReportFormat> report_format_from_name(std::string_view name);

/// Writes the requested files into `out_dir` and returns their paths.
std::vector<std::filesystem::path> emit_report(const RunRecord& record, const std::filesystem::path& out_dir,
                                               ReportFormat format = ReportFormat::all);

/// File-name-safe form of a backend name.
std::string file_stem(const CellKey& key);

}  // namespace emobench
