#include <cmath>
#include <stdexcept>

#include <gtest/gtest.h>

#include "emobench/dataset.hpp"
#include "emobench/errors.hpp"
#include "emobench/hashing.hpp"
#include "emobench/taxonomy.hpp"

using namespace emobench;

namespace {

// Values frozen from tests/oracles/precompute.py.
constexpr double kEvalEntropy = 2.2723232231944355;
constexpr double kFinetuneEntropy = 2.2481316634422539;
constexpr double kEvalEntropyK3 = 1.43632028964978;
constexpr double kEvalEntropyK2 = 0.9998998016518722;

std::array<std::uint64_t, kEmotionCount> counts(std::initializer_list<std::uint64_t> v) {
  std::array<std::uint64_t, kEmotionCount> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

}  // namespace

TEST(Labels, CanonicalOrder) {
  const auto& labels = canonical_labels();
  ASSERT_EQ(labels.size(), 6u);
  const char* names[] = {"sadness", "joy", "love", "anger", "fear", "surprise"};
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(label_name(labels[i]), names[i]);
    EXPECT_EQ(label_id(labels[i]), i);
  }
  EXPECT_EQ(label_id(labels.front()), 0u);
  EXPECT_EQ(label_name(labels.back()), "surprise");
}

TEST(Labels, NameAndCodeLookup) {
  EXPECT_EQ(label_from_name(" Joy "), Emotion::joy);
  EXPECT_EQ(label_from_name("SURPRISE"), Emotion::surprise);
  EXPECT_FALSE(label_from_name("hope"));
  EXPECT_FALSE(label_from_name(""));
  EXPECT_EQ(label_from_code(0), Emotion::sadness);
  EXPECT_EQ(label_from_code(5), Emotion::surprise);
  EXPECT_FALSE(label_from_code(6));
  EXPECT_FALSE(label_from_code(-1));
}

TEST(Schemes, Identity) {
  const auto s6 = scheme_for(6);
  EXPECT_EQ(s6.k(), 6u);
  EXPECT_TRUE(s6.is_identity());
  for (auto e : canonical_labels()) EXPECT_EQ(group_label(s6, e), std::string(label_name(e)));
}

TEST(Schemes, ThreeClasses) {
  const auto s3 = scheme_for(3);
  EXPECT_EQ(s3.class_names(), (std::vector<std::string>{"positive", "negative", "neutral"}));
  EXPECT_EQ(group_label(s3, Emotion::love), "positive");
  EXPECT_EQ(group_label(s3, Emotion::fear), "negative");
  EXPECT_EQ(group_label(s3, Emotion::surprise), "neutral");
  EXPECT_FALSE(group_label(s3, Emotion::sadness));
  EXPECT_FALSE(group_label(s3, Emotion::joy));
  EXPECT_FALSE(group_label(s3, Emotion::anger));
}

TEST(Schemes, TwoClasses) {
  const auto s2 = scheme_for(2);
  EXPECT_EQ(s2.class_names(), (std::vector<std::string>{"positive", "negative"}));
  EXPECT_EQ(group_label(s2, Emotion::joy), "positive");
  EXPECT_EQ(group_label(s2, Emotion::love), "positive");
  EXPECT_EQ(group_label(s2, Emotion::anger), "negative");
  EXPECT_EQ(group_label(s2, Emotion::sadness), "negative");
  EXPECT_FALSE(group_label(s2, Emotion::fear));
  EXPECT_FALSE(group_label(s2, Emotion::surprise));
  EXPECT_EQ(group_label(scheme_for(6), Emotion::fear), "fear");
}

TEST(Schemes, UnsupportedK) {
  EXPECT_THROW(scheme_for(4), ConfigError);
  EXPECT_THROW(scheme_for(0), ConfigError);
}

TEST(Schemes, ConstructionValidates) {
  using G = GroupingScheme::Group;
  EXPECT_THROW(GroupingScheme({G{"a", {}}}), ConfigError);
  EXPECT_THROW(GroupingScheme({G{"a", {Emotion::joy}}, G{"a", {Emotion::love}}}), ConfigError);
  EXPECT_THROW(GroupingScheme({G{"a", {Emotion::joy}}, G{"b", {Emotion::joy}}}), ConfigError);
  const GroupingScheme ok({G{"up", {Emotion::joy, Emotion::surprise}}, G{"down", {Emotion::fear}}});
  EXPECT_EQ(ok.class_of(Emotion::surprise), 0u);
  EXPECT_EQ(ok.index_of("down"), 1u);
  EXPECT_FALSE(ok.index_of("sideways"));
  EXPECT_EQ(ok.mapped_labels(), (std::vector<Emotion>{Emotion::joy, Emotion::fear, Emotion::surprise}));
}

TEST(Refinement, BuiltinSchemes) {
  const auto s6 = scheme_for(6), s3 = scheme_for(3), s2 = scheme_for(2);
  EXPECT_TRUE(is_refinement(s6, s2));
  EXPECT_TRUE(is_refinement(s6, s3));
  EXPECT_TRUE(is_refinement(s6, s6));
  EXPECT_TRUE(is_refinement(s3, s3));
  EXPECT_TRUE(is_refinement(s2, s2));
  EXPECT_FALSE(is_refinement(s2, s6));
}

TEST(Entropy, Uniform) {
  const LabelDistribution uniform = LabelDistribution::over_labels(counts({1, 1, 1, 1, 1, 1}));
  EXPECT_NEAR(entropy(uniform), std::log2(6.0), 1e-12);
}

TEST(Entropy, SingleClassIsZero) {
  EXPECT_EQ(entropy(LabelDistribution::over_labels(counts({0, 0, 9, 0, 0, 0}))), 0.0);
}

TEST(Entropy, EmptyThrows) {
  EXPECT_THROW(entropy(LabelDistribution::over_labels(counts({}))), std::domain_error);
}

TEST(Entropy, PublishedPartitions) {
  const auto eval = LabelDistribution::over_labels(kEvaluationCounts);
  EXPECT_NEAR(entropy(eval), kEvalEntropy, 1e-9);
  EXPECT_NEAR(entropy(LabelDistribution::over_labels(kFinetuneCounts)), kFinetuneEntropy, 1e-9);
  EXPECT_NEAR(entropy(induced_distribution(scheme_for(3), eval)), kEvalEntropyK3, 1e-9);
  EXPECT_NEAR(entropy(induced_distribution(scheme_for(2), eval)), kEvalEntropyK2, 1e-9);
}

TEST(Induced, Identity) {
  const auto d = LabelDistribution::over_labels(kEvaluationCounts);
  EXPECT_EQ(induced_distribution(scheme_for(6), d), d);
}

TEST(Induced, TwoClassSums) {
  // joy:1 love:2 anger:3 sadness:4 fear:5 surprise:6, in canonical order.
  const auto d = LabelDistribution::over_labels(counts({4, 1, 2, 3, 5, 6}));
  const auto g = induced_distribution(scheme_for(2), d);
  EXPECT_EQ(g.count("positive"), 3u);
  EXPECT_EQ(g.count("negative"), 7u);
  EXPECT_EQ(g.total(), 10u);
}

TEST(Induced, SingleMappedClass) {
  const auto g = induced_distribution(scheme_for(3), LabelDistribution::over_labels(counts({0, 0, 10, 0, 0, 0})));
  EXPECT_EQ(g.count("positive"), 10u);
  EXPECT_EQ(g.total(), 10u);
}

TEST(Induced, NeverIncreasesEntropyOnMappedSubset) {
  SplitMix rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    std::array<std::uint64_t, kEmotionCount> c{};
    for (auto& v : c) v = rng.below(50);
    const auto d = LabelDistribution::over_labels(c);
    for (int k : {6, 3, 2}) {
      const auto s = scheme_for(k);
      const auto restricted = restrict_to_mapped(s, d);
      const auto induced = induced_distribution(s, d);
      ASSERT_EQ(induced.total(), restricted.total());
      if (restricted.total() == 0) continue;
      EXPECT_LE(entropy(induced), entropy(restricted) + 1e-12);
    }
  }
}

TEST(Involution, DefaultPairing) {
  const auto inv = Involution::default_pairing();
  EXPECT_EQ(inverse_emotion(Emotion::joy, inv), Emotion::sadness);
  EXPECT_EQ(inverse_emotion(Emotion::sadness, inv), Emotion::joy);
  EXPECT_EQ(inverse_emotion(Emotion::fear, inv), Emotion::surprise);
  EXPECT_EQ(inverse_emotion(Emotion::love, inv), Emotion::anger);
}

TEST(Involution, SelfInverse) {
  const std::vector<Involution> all = {
      Involution::default_pairing(), Involution::from_pairs({}),
      Involution::from_pairs({{Emotion::joy, Emotion::fear}}),
      Involution::from_pairs({{Emotion::sadness, Emotion::surprise}, {Emotion::love, Emotion::joy}})};
  for (const auto& inv : all) {
    for (auto e : canonical_labels()) EXPECT_EQ(inv(inv(e)), e);
  }
}

TEST(Involution, RejectsDoublePairing) {
  EXPECT_THROW(Involution::from_pairs({{Emotion::joy, Emotion::fear}, {Emotion::joy, Emotion::love}}), ConfigError);
}
