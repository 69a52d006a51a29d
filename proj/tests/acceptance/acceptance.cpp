// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emobench/gateway.hpp"
#include "emobench/hashing.hpp"
#include "emobench/metrics.hpp"
#include "emobench/mock.hpp"
#include "emobench/normalizer.hpp"
#include "emobench/prompt.hpp"
#include "emobench/report.hpp"
#include "emobench/runner.hpp"
#include "emobench/taxonomy.hpp"
#include "test_support.hpp"

using namespace emobench;
using json = nlohmann::json;
using emobench::testing::TempDir;

namespace {

// Empty on success, otherwise the first violation found.
using Check = std::function<std::string()>;

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

json oracle_config(const std::string& run_dir, int parallelism, json mock) {
  return {{"dataset", {{"path", "data.csv"}, {"label_format", "integer"}, {"split", json::object()},
                       {"subsample", {{"n", 600}, {"seed", 1}}}}},
          {"backends", json::array({{{"name", "m"}, {"protocol", "mock"}, {"mock", std::move(mock)}}})},
          {"strategies", {"basic", "mask", "percent", "numeric", "inverse"}},
          {"schemes", {6, 3, 2}},
          {"policy", {{"max_attempts", 5}, {"base_backoff_ms", 1}}},
          {"parallelism", parallelism},
          {"run_dir", run_dir}};
}

std::string oracle_end_to_end() {
  TempDir dir("emobench-accept-oracle");
  emobench::testing::write_synthetic_csv(dir / "data.csv");
  const auto start = std::chrono::steady_clock::now();
  const auto record = execute(plan_from_json(oracle_config("run", 8, {{"behavior", "oracle"}}), dir.path()));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (record.cells.size() != 13) return fmt("expected 13 cells, got %zu", record.cells.size());
  for (const auto& cell : record.cells) {
    // Coarser schemes score only the samples whose gold label they map.
    std::size_t mapped = 0;
    for (const auto e : record.schemes.at(cell.key.k).mapped_labels()) mapped += record.eval_histogram.count(label_name(e));
    if (record.eval_histogram.total() != 600 || cell.samples != mapped) {
      return cell.key.describe() + ": " + std::to_string(cell.samples) + " samples";
    }
    if (!cell.metrics) return cell.key.describe() + ": no metrics";
    if (cell.metrics->accuracy != 1.0) return cell.key.describe() + fmt(": accuracy %.17g", cell.metrics->accuracy);
    if (cell.metrics->failure_rate != 0.0) return cell.key.describe() + fmt(": failure rate %.17g", cell.metrics->failure_rate);
  }
  if (seconds >= 30.0) return fmt("wall time %.2f s", seconds);
  return {};
}

std::string mask_round_trip() {
  for (int k : {6, 3, 2}) {
    const auto scheme = scheme_for(k);
    const auto alphabet = mask_alphabet(scheme);
    for (const auto& [cls, mask] : alphabet) {
      const auto out = parse_mask(mask, alphabet);
      if (out.kind != OutcomeKind::parsed || out.value != cls) return fmt("k=%d: %s did not parse to ", k, mask.c_str()) + cls;
    }
    // Every other string of the right length and every wrong length.
    for (std::size_t len = 0; len <= 8; ++len) {
      for (std::uint32_t bits = 0; bits < (1u << len); ++bits) {
        std::string s;
        for (std::size_t i = len; i-- > 0;) s.push_back((bits >> i) & 1 ? '1' : '0');
        const auto out = parse_mask(s, alphabet);
        const int ones = std::popcount(bits);
        OutcomeKind expected = OutcomeKind::malformed;
        if (len == static_cast<std::size_t>(k)) {
          expected = ones == 1 ? OutcomeKind::parsed : ones == 0 ? OutcomeKind::malformed : OutcomeKind::ambiguous;
        }
        if (out.kind != expected) {
          return fmt("k=%d: \"%s\" gave %s", k, s.c_str(), std::string(outcome_kind_name(out.kind)).c_str());
        }
      }
    }
  }
  if (parse_mask("000011", mask_alphabet(scheme_for(6))).kind != OutcomeKind::ambiguous) return "000011 not ambiguous";
  return {};
}

// Independent scoring straight from (gold, predicted) pairs; predicted < 0 is
// a failure. Returns nullopt where a metric is undefined.
struct NaiveScores {
  std::optional<double> accuracy;
  std::optional<double> value[3][2];  // [recall, precision, f][macro, weighted]
};

NaiveScores naive_scores(std::size_t k, const std::vector<std::pair<int, int>>& log, bool strict) {
  NaiveScores s;
  double correct = 0;
  double counted = 0;
  for (const auto& [g, p] : log) {
    if (p < 0 && !strict) continue;
    counted += 1;
    if (p == g) correct += 1;
  }
  if (counted > 0) s.accuracy = correct / counted;

  std::vector<double> rec(k), prec(k), f(k), support(k), predicted(k);
  for (std::size_t c = 0; c < k; ++c) {
    double tp = 0;
    for (const auto& [g, p] : log) {
      const int ci = static_cast<int>(c);
      if (g == ci && p == ci) tp += 1;
      if (g == ci && (p >= 0 || strict)) support[c] += 1;
      if (p == ci) predicted[c] += 1;
    }
    rec[c] = support[c] > 0 ? tp / support[c] : 0;
    prec[c] = predicted[c] > 0 ? tp / predicted[c] : 0;
    f[c] = rec[c] + prec[c] > 0 ? 2 * rec[c] * prec[c] / (rec[c] + prec[c]) : 0;
  }
  const std::vector<double>* per[3] = {&rec, &prec, &f};
  for (int m = 0; m < 3; ++m) {
    double macro = 0, present = 0, weighted = 0, weight = 0;
    for (std::size_t c = 0; c < k; ++c) {
      if (support[c] > 0 || predicted[c] > 0) {
        macro += (*per[m])[c];
        present += 1;
      }
      weighted += (*per[m])[c] * support[c];
      weight += support[c];
    }
    if (present > 0) s.value[m][0] = macro / present;
    if (weight > 0) s.value[m][1] = weighted / weight;
  }
  return s;
}

std::string metrics_equivalence() {
  SplitMix rng(2024);
  const std::array<OutcomeKind, 4> failures = {OutcomeKind::ambiguous, OutcomeKind::out_of_vocabulary,
                                               OutcomeKind::malformed, OutcomeKind::transport_failure};
  const std::array<Averaging, 2> avgs = {Averaging::macro, Averaging::weighted};
  using Fn = double (*)(const ConfusionMatrix&, Averaging, ScoringMode);
  const std::array<Fn, 3> fns = {&recall, &precision, &f_score};
  const char* names[3] = {"recall", "precision", "f_score"};
  int compared = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 1 + rng.below(4);
    const std::size_t mass = rng.below(21);
    std::vector<std::string> classes;
    for (std::size_t c = 0; c < k; ++c) classes.push_back("c" + std::to_string(c));
    ConfusionMatrix m(classes);
    std::vector<std::pair<int, int>> log;
    for (std::size_t i = 0; i < mass; ++i) {
      const int g = static_cast<int>(rng.below(k));
      // One draw in five is a failure of some kind.
      if (rng.below(5) == 0) {
        m.add_failure(g, failures[rng.below(4)]);
        log.emplace_back(g, -1);
      } else {
        const int p = static_cast<int>(rng.below(k));
        m.add(g, p);
        log.emplace_back(g, p);
      }
    }
    for (const auto mode : {ScoringMode::strict, ScoringMode::exclude}) {
      const auto naive = naive_scores(k, log, mode == ScoringMode::strict);
      auto check = [&](const char* what, std::optional<double> expected, auto&& actual) -> std::string {
        try {
          const double got = actual();
          if (!expected) return fmt("trial %d %s: defined (%.17g) where naive is undefined", trial, what, got);
          if (std::fabs(got - *expected) > 1e-12) return fmt("trial %d %s: %.17g vs %.17g", trial, what, got, *expected);
          ++compared;
        } catch (const std::domain_error&) {
          if (expected) return fmt("trial %d %s: threw where naive gives %.17g", trial, what, *expected);
        }
        return {};
      };
      if (auto e = check("accuracy", naive.accuracy, [&] { return accuracy(m, mode); }); !e.empty()) return e;
      for (int f = 0; f < 3; ++f) {
        for (int a = 0; a < 2; ++a) {
          const std::string what = std::string(names[f]) + "/" + std::string(averaging_name(avgs[a])) + "/" +
                                   std::string(scoring_mode_name(mode));
          if (auto e = check(what.c_str(), naive.value[f][a], [&] { return fns[f](m, avgs[a], mode); }); !e.empty()) {
            return e;
          }
          // Accuracy does not depend on the averaging; check it under both.
          if (auto e = check("accuracy", naive.accuracy, [&] { return compute_metrics(m, avgs[a], mode).accuracy; });
              !e.empty()) {
            return e;
          }
        }
      }
    }
  }
  if (compared < 10000) return fmt("only %d defined comparisons", compared);
  return {};
}

std::string grouping_homomorphism() {
  SplitMix rng(77);
  const auto fine = scheme_for(6);
  const std::array<OutcomeKind, 3> failures = {OutcomeKind::ambiguous, OutcomeKind::malformed,
                                               OutcomeKind::transport_failure};
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(60);
    std::vector<std::pair<Emotion, ParseOutcome>> log;
    for (std::size_t i = 0; i < n; ++i) {
      const auto gold = canonical_labels()[rng.below(6)];
      if (rng.below(6) == 0) {
        log.emplace_back(gold, ParseOutcome{failures[rng.below(3)], {}, "x"});
      } else {
        log.emplace_back(gold, ParseOutcome::parsed(std::string(label_name(canonical_labels()[rng.below(6)])), "x"));
      }
    }
    ConfusionMatrix six(fine.class_names());
    for (const auto& [gold, outcome] : log) accumulate(six, label_name(gold), outcome);

    for (int k : {3, 2}) {
      const auto coarse = scheme_for(k);
      ConfusionMatrix direct(coarse.class_names());
      for (const auto& [gold, outcome] : log) {
        const auto g = group_label(coarse, gold);
        if (!g) continue;
        ParseOutcome regrouped = outcome;
        if (outcome.kind == OutcomeKind::parsed) {
          const auto p = group_label(coarse, *label_from_name(outcome.value));
          regrouped = p ? ParseOutcome::parsed(*p, "x") : ParseOutcome::out_of_vocabulary(outcome.value, "x");
        }
        accumulate(direct, *g, regrouped);
      }
      const auto grouped = group_matrix(six, coarse);
      if (!(grouped == direct)) return fmt("trial %d k=%d: matrices differ", trial, k);
      if (direct.mass() + direct.total_failures() == 0) continue;
      for (const auto mode : {ScoringMode::strict, ScoringMode::exclude}) {
        for (const auto avg : {Averaging::macro, Averaging::weighted}) {
          std::optional<MetricSet> a, b;
          try {
            a = compute_metrics(grouped, avg, mode);
          } catch (const std::domain_error&) {
          }
          try {
            b = compute_metrics(direct, avg, mode);
          } catch (const std::domain_error&) {
          }
          if (a != b) return fmt("trial %d k=%d: metrics differ", trial, k);
        }
      }
    }
  }
  return {};
}

std::string entropy_checks() {
  const double uniform = entropy(LabelDistribution::over_labels({1, 1, 1, 1, 1, 1}));
  if (std::fabs(uniform - std::log2(6.0)) > 1e-12) return fmt("uniform: %.17g", uniform);
  const double eval = entropy(LabelDistribution::over_labels(kEvaluationCounts));
  if (std::fabs(eval - 2.2723232231944355) > 1e-9) return fmt("evaluation counts: %.17g", eval);
  SplitMix rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    std::array<std::uint64_t, kEmotionCount> counts{};
    for (auto& c : counts) c = rng.below(1000);
    const auto d = LabelDistribution::over_labels(counts);
    for (int k : {6, 3, 2}) {
      const auto s = scheme_for(k);
      const auto restricted = restrict_to_mapped(s, d);
      if (restricted.total() == 0) continue;
      const double before = entropy(restricted);
      const double after = entropy(induced_distribution(s, d));
      if (after > before + 1e-12) return fmt("trial %d k=%d: %.17g > %.17g", trial, k, after, before);
    }
  }
  return {};
}

std::string resilience() {
  constexpr int kParallelism = 16;
  std::vector<Sample> samples;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    samples.push_back({i, "resilience sentence " + std::to_string(i), canonical_labels()[i % kEmotionCount]});
  }
  auto behavior = MockBehavior::flaky(0.3, 32);
  behavior.latency = std::chrono::microseconds(200);
  const auto backend = mock_backend(behavior, samples);
  std::vector<BatchItem> items;
  for (const auto& s : samples) items.push_back({s.id, render(PromptStrategy::basic, {}, scheme_for(6), s.text)});
  BatchOptions opts;
  opts.parallelism = kParallelism;
  opts.policy.max_attempts = 5;
  opts.policy.base_backoff = std::chrono::milliseconds(1);
  BatchStats stats;
  const auto replies = run_batch(backend, items, opts, &stats);
  if (replies.size() != samples.size()) return fmt("%zu replies for %zu samples", replies.size(), samples.size());
  const ResponseNormalizer normalizer;
  for (std::size_t i = 0; i < replies.size(); ++i) {
    if (!replies[i].ok()) return fmt("sample %zu dropped after %d attempts", i, replies[i].attempts);
    const auto out = normalizer.decode(*replies[i].text, items[i].prompt);
    if (out.kind != OutcomeKind::parsed || out.value != label_name(samples[i].gold)) return fmt("sample %zu misparsed", i);
  }
  if (backend.mock->calls() <= samples.size()) return "flaky mock produced no transient failures";
  const int peak = backend.mock->max_in_flight();
  if (peak > kParallelism) return fmt("in flight peaked at %d > %d", peak, kParallelism);
  return {};
}

std::string determinism() {
  TempDir dir("emobench-accept-determinism");
  emobench::testing::write_synthetic_csv(dir / "data.csv");
  const json mock = {{"behavior", "flaky"}, {"rate", 0.3}, {"seed", 32}};
  const auto a = execute(plan_from_json(oracle_config("a", 8, mock), dir.path()));
  const auto b = execute(plan_from_json(oracle_config("b", 8, mock), dir.path()));
  emit_report(a, dir / "ra");
  emit_report(b, dir / "rb");
  const auto ja = emobench::testing::read_file(dir / "ra/report.json");
  if (ja.empty() || ja != emobench::testing::read_file(dir / "rb/report.json")) return "report.json differs";
  const auto serial = execute(plan_from_json(oracle_config("p1", 1, mock), dir.path()));
  const auto wide = execute(plan_from_json(oracle_config("p64", 64, mock), dir.path()));
  if (!(serial == wide)) return "parallelism 1 and 64 records differ";
  if (to_json(serial) != ja) return "report.json depends on parallelism";
  return {};
}

std::string template_fidelity() {
  struct Case {
    const char* fixture;
    DialectKind dialect;
    int k;
  };
  const Case cases[] = {{"listing1_plain_instruct_k6.txt", DialectKind::plain_instruct, 6},
                        {"listing2_quoted_input_k3.txt", DialectKind::quoted_input, 3},
                        {"listing3_header_delimited_k6.txt", DialectKind::header_delimited, 6}};
  const std::string sentence = "i feel like i am still looking at a blank canvas";
  for (const auto& c : cases) {
    auto expected = emobench::testing::read_file(emobench::testing::fixture_dir() / "listings" / c.fixture);
    if (expected.empty()) return std::string("missing fixture ") + c.fixture;
    const auto at = expected.find("<SENTENCE>");
    if (at == std::string::npos) return std::string("no placeholder in ") + c.fixture;
    expected.replace(at, 10, sentence);
    const auto got = render(PromptStrategy::basic, ModelDialect{c.dialect, {}}, scheme_for(c.k), sentence).flat();
    if (got != expected) return std::string("render differs from ") + c.fixture;
  }
  return {};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, Check>> criteria = {
      {"oracle end-to-end", oracle_end_to_end},
      {"mask round trip", mask_round_trip},
      {"metrics oracle equivalence", metrics_equivalence},
      {"grouping homomorphism", grouping_homomorphism},
      {"entropy checks", entropy_checks},
      {"resilience", resilience},
      {"determinism", determinism},
      {"template fidelity", template_fidelity},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    std::string error;
    try {
      error = check();
    } catch (const std::exception& e) {
      error = std::string("threw: ") + e.what();
    }
    if (error.empty()) {
      std::printf("PASS %s\n", name);
    } else {
      std::printf("FAIL %s: %s\n", name, error.c_str());
      ++failed;
    }
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
