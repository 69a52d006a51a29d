#include <algorithm>
#include <stdexcept>

#include <gtest/gtest.h>

#include "emobench/hashing.hpp"
#include "emobench/metrics.hpp"

using namespace emobench;

namespace {

ConfusionMatrix two_by_two() {
  // [[1,1],[0,2]]: gold a -> a once and b once, gold b -> b twice.
  ConfusionMatrix m({"a", "b"});
  m.add(0, 0);
  m.add(0, 1);
  m.add(1, 1, 2);
  return m;
}

MetricSet with_accuracy(double acc) {
  MetricSet m;
  m.accuracy = acc;
  return m;
}

MetricSet random_set(SplitMix& rng) {
  auto unit = [&] { return static_cast<double>(rng.below(10001)) / 10000.0; };
  MetricSet m;
  m.accuracy = unit();
  m.recall = unit();
  m.precision = unit();
  m.f_score = unit();
  m.failure_rate = unit();
  return m;
}

}  // namespace

TEST(Accumulate, ParsedAndFailures) {
  ConfusionMatrix m(scheme_for(6).class_names());
  accumulate(m, "joy", ParseOutcome::parsed("joy", "joy"));
  EXPECT_EQ(m.at(1, 1), 1u);
  EXPECT_EQ(m.trace(), 1u);

  ConfusionMatrix f(scheme_for(6).class_names());
  accumulate(f, "joy", ParseOutcome::malformed("?"));
  EXPECT_EQ(f.failures(OutcomeKind::malformed), 1u);
  EXPECT_EQ(f.total_failures(), 1u);
  EXPECT_EQ(f.mass(), 0u);
  EXPECT_EQ(accuracy(f), 0.0);
  EXPECT_EQ(compute_metrics(f).failure_rate, 1.0);
  EXPECT_THROW(accumulate(f, "hope", ParseOutcome::parsed("joy", "")), std::logic_error);
}

TEST(Accumulate, HundredOracleOutcomes) {
  const auto names = scheme_for(6).class_names();
  ConfusionMatrix m(names);
  for (int i = 0; i < 100; ++i) accumulate(m, names[i % 6], ParseOutcome::parsed(names[i % 6], ""));
  EXPECT_EQ(m.trace(), 100u);
  const auto all = compute_metrics(m);
  EXPECT_EQ(all.accuracy, 1.0);
  EXPECT_EQ(all.recall, 1.0);
  EXPECT_EQ(all.precision, 1.0);
  EXPECT_EQ(all.f_score, 1.0);
  EXPECT_EQ(all.failure_rate, 0.0);
}

TEST(Accumulate, OrderIndependent) {
  const auto names = scheme_for(6).class_names();
  std::vector<std::pair<std::string, ParseOutcome>> log;
  SplitMix rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto& gold = names[rng.below(6)];
    if (rng.below(5) == 0) {
      log.emplace_back(gold, ParseOutcome::ambiguous(""));
    } else {
      log.emplace_back(gold, ParseOutcome::parsed(names[rng.below(6)], ""));
    }
  }
  ConfusionMatrix a(names), b(names);
  for (const auto& [g, o] : log) accumulate(a, g, o);
  SplitMix(4).shuffle(std::span(log));
  for (const auto& [g, o] : log) accumulate(b, g, o);
  EXPECT_EQ(a, b);
}

TEST(Metrics, HandComputedTwoClass) {
  const auto m = two_by_two();
  EXPECT_DOUBLE_EQ(accuracy(m), 0.75);
  const auto pc = per_class(m);
  EXPECT_DOUBLE_EQ(pc[0].recall, 0.5);
  EXPECT_DOUBLE_EQ(pc[1].recall, 1.0);
  EXPECT_DOUBLE_EQ(pc[0].precision, 1.0);
  EXPECT_DOUBLE_EQ(pc[1].precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(recall(m), 0.75);
  EXPECT_NEAR(precision(m), 0.8333333333333334, 1e-15);
  const double f0 = 2 * 1.0 * 0.5 / 1.5, f1 = 2 * (2.0 / 3.0) * 1.0 / (2.0 / 3.0 + 1.0);
  EXPECT_NEAR(f_score(m), (f0 + f1) / 2, 1e-15);
  // Weighted by support (2 and 2) equals macro here.
  EXPECT_NEAR(recall(m, Averaging::weighted), 0.75, 1e-15);
}

TEST(Metrics, StrictVersusExclude) {
  auto m = two_by_two();
  m.add_failure(0, OutcomeKind::malformed, 4);
  EXPECT_DOUBLE_EQ(accuracy(m, ScoringMode::strict), 3.0 / 8.0);
  EXPECT_DOUBLE_EQ(accuracy(m, ScoringMode::exclude), 0.75);
  EXPECT_DOUBLE_EQ(per_class(m, ScoringMode::strict)[0].recall, 1.0 / 6.0);
  EXPECT_DOUBLE_EQ(per_class(m, ScoringMode::exclude)[0].recall, 0.5);
  EXPECT_DOUBLE_EQ(compute_metrics(m, Averaging::macro, ScoringMode::exclude).failure_rate, 0.5);
}

TEST(Metrics, EmptyMatrixThrows) {
  const ConfusionMatrix m({"a", "b"});
  EXPECT_THROW(accuracy(m), std::domain_error);
  EXPECT_THROW(recall(m), std::domain_error);
}

TEST(Metrics, BoundsAndMacroFBelowMax) {
  SplitMix rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t k = 2 + rng.below(5);
    std::vector<std::string> names;
    for (std::size_t i = 0; i < k; ++i) names.push_back("c" + std::to_string(i));
    ConfusionMatrix m(names);
    for (int n = 0; n < 30; ++n) m.add(rng.below(k), rng.below(k));
    for (auto avg : {Averaging::macro, Averaging::weighted}) {
      const auto s = compute_metrics(m, avg);
      for (double v : {s.accuracy, s.recall, s.precision, s.f_score}) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
    }
    double max_f = 0;
    for (const auto& c : per_class(m)) max_f = std::max(max_f, c.f_score);
    EXPECT_LE(f_score(m), max_f + 1e-15);
  }
}

TEST(Merge, CellwiseSum) {
  auto a = two_by_two();
  a.add_failure(1, OutcomeKind::ambiguous);
  auto b = two_by_two();
  a.merge(b);
  EXPECT_EQ(a.at(1, 1), 4u);
  EXPECT_EQ(a.failures(OutcomeKind::ambiguous), 1u);
  EXPECT_THROW(a.merge(ConfusionMatrix({"x", "y"})), std::invalid_argument);
}

TEST(Deltas, ModelFamilies) {
  const std::vector<MetricSet> llm = {with_accuracy(0.5988)}, pre = {with_accuracy(0.8226)};
  EXPECT_NEAR(delta_models(llm, pre).delta.accuracy, -0.2238, 1e-12);
  EXPECT_NEAR(delta_models(pre, llm).delta.accuracy, 0.2238, 1e-12);
  const auto zero = delta_models(llm, llm);
  EXPECT_EQ(zero.delta.accuracy, 0.0);
  EXPECT_EQ(zero.kind, DeltaKind::model_family);
  EXPECT_THROW(delta_models({}, pre), std::domain_error);
}

TEST(Deltas, ModelFamilyAveragesMeans) {
  const std::vector<MetricSet> llm = {with_accuracy(0.2), with_accuracy(0.4)}, pre = {with_accuracy(0.9)};
  EXPECT_NEAR(delta_models(llm, pre).delta.accuracy, -0.6, 1e-12);
  auto weighted = with_accuracy(0.9);
  weighted.averaging = Averaging::weighted;
  const std::vector<MetricSet> mixed = {weighted};
  EXPECT_THROW(delta_models(llm, mixed), std::invalid_argument);
}

TEST(Deltas, PromptPairs) {
  const std::map<PromptStrategy, MetricSet> gemma = {{PromptStrategy::basic, with_accuracy(0.5994)},
                                                     {PromptStrategy::mask, with_accuracy(0.1275)}};
  EXPECT_NEAR(delta_prompts(gemma, PromptStrategy::basic, PromptStrategy::mask).delta.accuracy, 0.4719, 1e-12);
  EXPECT_THROW(delta_prompts(gemma, PromptStrategy::basic, PromptStrategy::basic), std::domain_error);
  EXPECT_THROW(delta_prompts(gemma, PromptStrategy::basic, PromptStrategy::numeric), std::domain_error);

  SplitMix rng(8);
  for (int i = 0; i < 100; ++i) {
    const std::map<PromptStrategy, MetricSet> m = {{PromptStrategy::percent, random_set(rng)},
                                                   {PromptStrategy::inverse, random_set(rng)}};
    const auto ij = delta_prompts(m, PromptStrategy::percent, PromptStrategy::inverse).delta;
    const auto ji = delta_prompts(m, PromptStrategy::inverse, PromptStrategy::percent).delta;
    EXPECT_EQ(ij.accuracy, -ji.accuracy);
    EXPECT_EQ(ij.recall, -ji.recall);
    EXPECT_EQ(ij.precision, -ji.precision);
    EXPECT_EQ(ij.f_score, -ji.f_score);
    EXPECT_EQ(ij.failure_rate, -ji.failure_rate);
  }
}

TEST(Deltas, Groupings) {
  const auto gain = delta_groupings(with_accuracy(0.5994), 6, with_accuracy(0.8039), 2);
  EXPECT_NEAR(gain.delta.accuracy, 0.2045, 1e-12);
  EXPECT_EQ(gain.lhs, "k=2");
  EXPECT_EQ(gain.rhs, "k=6");
  EXPECT_EQ(delta_groupings(with_accuracy(0.5), 6, with_accuracy(0.5), 3).delta.accuracy, 0.0);
  EXPECT_THROW(delta_groupings(with_accuracy(0.8), 2, with_accuracy(0.6), 6), std::domain_error);
  EXPECT_THROW(delta_groupings(with_accuracy(0.8), 3, with_accuracy(0.6), 3), std::domain_error);
}

TEST(GroupMatrix, Identity) {
  ConfusionMatrix m(scheme_for(6).class_names());
  SplitMix rng(1);
  for (int i = 0; i < 50; ++i) m.add(rng.below(6), rng.below(6));
  m.add_failure(2, OutcomeKind::malformed);
  EXPECT_EQ(group_matrix(m, scheme_for(6)), m);
}

TEST(GroupMatrix, TwoClassDiagonal) {
  ConfusionMatrix m(scheme_for(6).class_names());
  for (std::size_t i = 0; i < 6; ++i) m.add(i, i);
  const auto g = group_matrix(m, scheme_for(2));
  EXPECT_EQ(g.classes(), (std::vector<std::string>{"positive", "negative"}));
  EXPECT_EQ(g.at(0, 0), 2u);
  EXPECT_EQ(g.at(1, 1), 2u);
  EXPECT_EQ(g.at(0, 1), 0u);
  EXPECT_EQ(g.mass(), 4u);
  EXPECT_EQ(g.total_failures(), 0u);
}

TEST(GroupMatrix, UnmappedPredictionBecomesOov) {
  ConfusionMatrix m(scheme_for(6).class_names());
  m.add(label_id(Emotion::joy), label_id(Emotion::fear));
  const auto g = group_matrix(m, scheme_for(2));
  EXPECT_EQ(g.mass(), 0u);
  EXPECT_EQ(g.failures(OutcomeKind::out_of_vocabulary), 1u);
  EXPECT_THROW(group_matrix(ConfusionMatrix({"a", "b"}), scheme_for(2)), std::invalid_argument);
}

TEST(Names, RoundTrip) {
  for (auto k : {DeltaKind::model_family, DeltaKind::prompt_pair, DeltaKind::grouping_pair}) {
    EXPECT_EQ(delta_kind_from_name(delta_kind_name(k)), k);
  }
  EXPECT_EQ(delta_kind_name(DeltaKind::prompt_pair), "prompt-pair");
  EXPECT_EQ(scoring_mode_from_name("exclude"), ScoringMode::exclude);
  EXPECT_EQ(averaging_from_name("weighted"), Averaging::weighted);
  for (std::size_t i = 0; i < kFailureKinds; ++i) EXPECT_EQ(failure_index(failure_kind(i)), i);
  EXPECT_THROW(failure_index(OutcomeKind::parsed), std::logic_error);
}
