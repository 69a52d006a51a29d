// emobench command line: run, resume, report, compare, validate-dataset,
// mock-serve, synth-dataset, render.

#include <csignal>
#include <filesystem>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "emobench/dataset.hpp"
#include "emobench/errors.hpp"
#include "emobench/mock.hpp"
#include "emobench/prompt.hpp"
#include "emobench/report.hpp"
#include "emobench/runner.hpp"

namespace {

using namespace emobench;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitValidation = 2;
constexpr int kExitIncomplete = 3;

MockHttpServer* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

std::optional<LabelFormat> label_format(const std::string& name) {
  if (name == "auto") return LabelFormat::automatic;
  if (name == "integer") return LabelFormat::integer_coded;
  if (name == "name") return LabelFormat::name_coded;
  return std::nullopt;
}

void print_summary(const RunRecord& record, const fs::path& report_dir) {
  for (const auto& c : record.cells) {
    if (c.metrics) {
      std::printf("%-40s acc %6s  f %6s  failures %6s  (%llu samples)\n", c.key.describe().c_str(),
                  percent(c.metrics->accuracy).c_str(), percent(c.metrics->f_score).c_str(),
                  percent(c.metrics->failure_rate).c_str(), static_cast<unsigned long long>(c.samples));
    } else {
      std::printf("%-40s %s%s%s\n", c.key.describe().c_str(), std::string(cell_status_name(c.status)).c_str(),
                  c.note.empty() ? "" : ": ", c.note.c_str());
    }
  }
  if (record.interrupted) std::printf("run interrupted; continue with: emobench resume <run_dir>\n");
  std::printf("report written to %s\n", report_dir.string().c_str());
}

int finish_run(const RunRecord& record, const fs::path& run_dir) {
  const auto report_dir = run_dir / "report";
  emit_report(record, report_dir);
  print_summary(record, report_dir);
  return (record.any_aborted() || record.interrupted) ? kExitIncomplete : kExitOk;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emotion-recognition benchmark harness for language-model backends"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "emobench 0.3.0");

  // run
  auto* run = app.add_subcommand("run", "Plan and execute an experiment grid");
  std::string config_path;
  std::optional<std::size_t> subsample;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> max_requests;
  std::optional<int> parallelism;
  std::string run_dir_override;
  run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--subsample", subsample, "Evaluate a stratified subsample of N samples");
  run->add_option("--seed", seed, "Seed for --subsample");
  run->add_option("--max-requests", max_requests, "Stop after N network requests (resumable)");
  run->add_option("--parallelism", parallelism, "Override the configured parallelism");
  run->add_option("--run-dir", run_dir_override, "Override the configured run directory");

  // resume
  auto* resume_cmd = app.add_subcommand("resume", "Continue an interrupted run from its cache");
  std::string resume_dir;
  resume_cmd->add_option("run_dir", resume_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  resume_cmd->add_option("--max-requests", max_requests, "Stop after N network requests (resumable)");

  // report
  auto* report = app.add_subcommand("report", "Re-emit report files for a run");
  std::string report_dir;
  std::string format = "all";
  report->add_option("run_dir", report_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  report->add_option("--format", format, "json, csv, svg or all")->check(CLI::IsMember({"json", "csv", "svg", "all"}));

  // compare
  auto* compare = app.add_subcommand("compare", "Delta table between two runs (a - b)");
  std::string run_a, run_b, kind_name = "model-family", compare_out;
  compare->add_option("a", run_a, "First run directory")->required()->check(CLI::ExistingDirectory);
  compare->add_option("b", run_b, "Second run directory")->required()->check(CLI::ExistingDirectory);
  compare->add_option("--kind", kind_name, "model-family, prompt-pair or grouping-pair")
      ->check(CLI::IsMember({"model-family", "prompt-pair", "grouping-pair"}));
  compare->add_option("--out", compare_out, "Write the CSV here instead of stdout");

  // validate-dataset
  auto* validate = app.add_subcommand("validate-dataset", "Check a text,label CSV");
  std::string dataset_path, format_name = "auto";
  validate->add_option("path", dataset_path, "CSV file")->required()->check(CLI::ExistingFile);
  validate->add_option("--label-format", format_name, "auto, integer or name")
      ->check(CLI::IsMember({"auto", "integer", "name"}));

  // mock-serve
  auto* serve = app.add_subcommand("mock-serve", "Serve a mock backend over HTTP");
  std::string behavior = "oracle", serve_dataset, host = "127.0.0.1", api_key, fixed_label, port_file;
  int port = 8080;
  double rate = 0.0, latency_ms = 0.0;
  std::uint64_t mock_seed = 0;
  serve->add_option("--behavior", behavior, "oracle, fixed, malformed or flaky")
      ->check(CLI::IsMember({"oracle", "fixed", "malformed", "flaky"}));
  serve->add_option("--dataset", serve_dataset, "Corpus the mock answers for")->required()->check(CLI::ExistingFile);
  serve->add_option("--label-format", format_name, "auto, integer or name")
      ->check(CLI::IsMember({"auto", "integer", "name"}));
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port (0 picks a free one)");
  serve->add_option("--port-file", port_file, "Write the bound port to this file");
  serve->add_option("--rate", rate, "Failure rate for malformed/flaky");
  serve->add_option("--seed", mock_seed, "Seed for malformed/flaky");
  serve->add_option("--label", fixed_label, "Label for the fixed behaviour");
  serve->add_option("--latency-ms", latency_ms, "Per-request latency");
  serve->add_option("--api-key", api_key, "Require this bearer token");

  // synth-dataset
  auto* synth = app.add_subcommand("synth-dataset", "Write a synthetic corpus with the published class counts");
  std::string synth_out;
  std::uint64_t synth_seed = 0;
  synth->add_option("--out", synth_out, "Output CSV")->required();
  synth->add_option("--seed", synth_seed, "Shuffle seed");

  // render
  auto* render_cmd = app.add_subcommand("render", "Print the prompt for one sentence");
  std::string strategy = "basic", dialect = "plain-instruct", sentence;
  int k = 6;
  render_cmd->add_option("--strategy", strategy, "basic, mask, percent, numeric or inverse");
  render_cmd->add_option("--dialect", dialect, "plain-instruct, quoted-input or header-delimited");
  render_cmd->add_option("--k", k, "Grouping scheme (6, 3 or 2)");
  render_cmd->add_option("sentence", sentence, "Text to analyse")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Help and version exit 0; usage errors are validation errors.
    return app.exit(e) == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*run) {
      auto config = nlohmann::json::parse(read_text(config_path), nullptr, false);
      if (config.is_discarded() || !config.is_object()) throw ConfigError("config '" + config_path + "' is not a JSON object");
      if (subsample) {
        auto& ds = config["dataset"];
        if (!ds.is_object()) throw ConfigError("config key 'dataset': is required");
        std::uint64_t configured_seed = 0;
        if (ds.contains("subsample") && ds["subsample"].contains("seed")) configured_seed = ds["subsample"]["seed"].get<std::uint64_t>();
        ds["subsample"] = {{"n", *subsample}, {"seed", seed.value_or(configured_seed)}};
      } else if (seed) {
        throw ConfigError("--seed only applies together with --subsample");
      }
      if (parallelism) config["parallelism"] = *parallelism;
      const auto base = fs::absolute(config_path).parent_path();
      if (!run_dir_override.empty()) config["run_dir"] = fs::absolute(run_dir_override).string();
      const auto plan = plan_from_json(config, base);
      ExecuteOptions opts;
      opts.max_fresh_requests = max_requests;
      const auto record = execute(plan, opts);
      return finish_run(record, plan.run_dir);
    }
    if (*resume_cmd) {
      ExecuteOptions opts;
      opts.max_fresh_requests = max_requests;
      const auto record = resume(resume_dir, opts);
      return finish_run(record, fs::absolute(resume_dir));
    }
    if (*report) {
      const auto record = load_record(report_dir);
      for (const auto& path : emit_report(record, fs::path(report_dir) / "report", *report_format_from_name(format))) {
        std::printf("%s\n", path.string().c_str());
      }
      return kExitOk;
    }
    if (*compare) {
      const auto rows = compare_runs(load_record(run_a), load_record(run_b), *delta_kind_from_name(kind_name));
      const auto csv = deltas_csv(rows);
      if (compare_out.empty()) {
        std::fwrite(csv.data(), 1, csv.size(), stdout);
      } else {
        std::ofstream(compare_out, std::ios::binary) << csv;
      }
      return kExitOk;
    }
    if (*validate) {
      const auto result = load_csv(dataset_path, *label_format(format_name));
      const auto hist = class_histogram(result.samples);
      std::printf("rows: %zu  valid: %zu  errors: %zu\n", result.data_rows, result.samples.size(), result.errors.size());
      for (std::size_t i = 0; i < hist.classes().size(); ++i) {
        std::printf("  %-9s %llu\n", hist.classes()[i].c_str(), static_cast<unsigned long long>(hist.counts()[i]));
      }
      for (const auto& e : result.errors) std::fprintf(stderr, "%s\n", e.message.c_str());
      return result.errors.empty() ? kExitOk : kExitValidation;
    }
    if (*serve) {
      const auto data = load_csv(serve_dataset, *label_format(format_name));
      MockBehavior b;
      b.kind = *mock_kind_from_name(behavior);
      b.rate = rate;
      b.seed = mock_seed;
      b.latency = std::chrono::microseconds(static_cast<std::int64_t>(latency_ms * 1000.0));
      if (b.kind == MockKind::fixed) {
        const auto label = label_from_name(fixed_label);
        if (!label) throw ConfigError("--label must name one of the six emotions");
        b.label = *label;
      }
      MockHttpServer server(std::make_shared<MockResponder>(b, data.samples), {host, port, api_key});
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      server.start();
      if (!port_file.empty()) std::ofstream(port_file) << server.port() << "\n";
      std::printf("mock backend (%s) listening on %s\n", behavior.c_str(), server.base_url().c_str());
      std::fflush(stdout);
      server.run();
      g_server = nullptr;
      return kExitOk;
    }
    if (*synth) {
      const std::array blocks = {kFinetuneCounts, kEvaluationCounts};
      const auto corpus = make_synthetic_corpus(blocks, synth_seed);
      const std::filesystem::path out_path(synth_out);
      std::error_code ec;
      if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path(), ec);
      std::ofstream out(out_path, std::ios::binary);
      out << to_csv(corpus, LabelFormat::integer_coded);
      if (!out.flush()) throw DatasetError("cannot write " + synth_out);
      std::printf("wrote %zu samples to %s\n", corpus.size(), synth_out.c_str());
      return kExitOk;
    }
    if (*render_cmd) {
      const auto s = strategy_from_name(strategy);
      const auto d = dialect_from_name(dialect);
      if (!s) throw ConfigError("unknown strategy '" + strategy + "' (valid: basic, mask, percent, numeric, inverse)");
      if (!d) throw ConfigError("unknown dialect '" + dialect + "'");
      const auto prompt = render(*s, ModelDialect{*d, {}}, scheme_for(k), sentence);
      std::printf("%s\n", prompt.flat().c_str());
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const DatasetError& e) {
    std::fprintf(stderr, "dataset error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitOk;
}
