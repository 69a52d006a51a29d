#include <set>

#include <gtest/gtest.h>

#include "emobench/prompt.hpp"
#include "test_support.hpp"

using namespace emobench;
using emobench::testing::fixture_dir;
using emobench::testing::read_file;

namespace {

std::string listing(const std::string& name, std::string_view sentence) {
  auto text = read_file(fixture_dir() / "listings" / name);
  const std::string marker = "<SENTENCE>";
  const auto at = text.find(marker);
  if (at != std::string::npos) text.replace(at, marker.size(), sentence);
  return text;
}

ModelDialect dialect(DialectKind kind) { return ModelDialect{kind, {}}; }

constexpr std::array<DialectKind, 3> kDialects = {DialectKind::plain_instruct, DialectKind::quoted_input,
                                                   DialectKind::header_delimited};

}  // namespace

TEST(Listings, PlainInstructSixClasses) {
  const auto p = render(PromptStrategy::basic, dialect(DialectKind::plain_instruct), scheme_for(6), "i feel x");
  EXPECT_EQ(p.flat(), listing("listing1_plain_instruct_k6.txt", "i feel x"));
}

TEST(Listings, QuotedInputThreeClasses) {
  const auto p = render(PromptStrategy::basic, dialect(DialectKind::quoted_input), scheme_for(3), "i feel x");
  EXPECT_EQ(p.flat(), listing("listing2_quoted_input_k3.txt", "i feel x"));
}

TEST(Listings, HeaderDelimitedSixClasses) {
  const auto p = render(PromptStrategy::basic, dialect(DialectKind::header_delimited), scheme_for(6), "i feel x");
  EXPECT_EQ(p.flat(), listing("listing3_header_delimited_k6.txt", "i feel x"));
  ASSERT_EQ(p.segments.size(), 2u);
  EXPECT_EQ(p.segments[0].role, Role::system);
  EXPECT_EQ(p.segments[1].role, Role::user);
}

TEST(Render, BasicMentionsStudyClasses) {
  const auto p = render(PromptStrategy::basic, dialect(DialectKind::plain_instruct), scheme_for(6), "i feel x");
  EXPECT_NE(p.flat().find("Only detect the following emotions in the study: sadness, joy, love, anger, fear, surprise."),
            std::string::npos);
  const auto q = render(PromptStrategy::basic, dialect(DialectKind::quoted_input), scheme_for(3), "i feel x");
  EXPECT_NE(q.flat().find("the positive emotion group will be (love), the negative emotion group will be (fear)"),
            std::string::npos);
}

TEST(Render, MaskEnumeratesCodes) {
  const auto p = render(PromptStrategy::mask, dialect(DialectKind::plain_instruct), scheme_for(6), "s");
  for (const auto& [cls, bits] : mask_alphabet(scheme_for(6))) {
    EXPECT_NE(p.flat().find(cls + " = " + bits), std::string::npos) << cls;
  }
  EXPECT_EQ(p.answer_grammar.kind, GrammarKind::bitstring);
  EXPECT_EQ(p.answer_grammar.k, 6u);
}

TEST(Render, InverseStatesPairs) {
  const auto p = render(PromptStrategy::inverse, dialect(DialectKind::plain_instruct), scheme_for(6), "s");
  EXPECT_NE(p.flat().find("sadness and joy are inverse emotions"), std::string::npos);
  EXPECT_NE(p.flat().find("fear and surprise are inverse emotions"), std::string::npos);
}

TEST(Render, ExactClassEnumeration) {
  const std::vector<std::string> all = {"sadness", "joy", "love", "anger", "fear", "surprise", "positive",
                                        "negative", "neutral"};
  for (auto d : kDialects) {
    for (auto s : all_strategies()) {
      for (int k : {6, 3, 2}) {
        if (s == PromptStrategy::inverse && k != 6) continue;
        const auto scheme = scheme_for(k);
        const auto p = render(s, dialect(d), scheme, "xyzzy");
        std::string instructions;
        for (const auto& seg : p.segments) instructions += seg.content + "\n";
        const std::set<std::string> names(scheme.class_names().begin(), scheme.class_names().end());
        for (const auto& word : all) {
          const bool present = instructions.find(word) != std::string::npos;
          // Grouped prompts name the member labels too; only class names must match exactly.
          if (names.contains(word)) {
            EXPECT_TRUE(present) << word << " missing, k=" << k << " " << strategy_name(s);
          } else if (k == 6) {
            EXPECT_FALSE(present) << word << " extra, " << strategy_name(s);
          }
        }
        EXPECT_EQ(p.answer_grammar, answer_grammar(s, scheme));
        EXPECT_EQ(extract_sentence(p.segments.back().content), "xyzzy");
      }
    }
  }
}

TEST(Render, Pure) {
  for (auto d : kDialects) {
    for (auto s : all_strategies()) {
      const auto a = render(s, dialect(d), scheme_for(6), "same {{sentence}} text");
      const auto b = render(s, dialect(d), scheme_for(6), "same {{sentence}} text");
      EXPECT_EQ(a.segments, b.segments);
      // Inserted text is never re-scanned for placeholders.
      EXPECT_NE(a.flat().find("same {{sentence}} text"), std::string::npos);
    }
  }
}

TEST(Render, HeaderTokensInOrder) {
  for (auto s : all_strategies()) {
    const auto text = render(s, dialect(DialectKind::header_delimited), scheme_for(6), "s").flat();
    std::size_t at = 0;
    for (const char* token : {"<|begin_of_text|>", "<|start_header_id|>", "<|end_header_id|>", "<|eot_id|>",
                              "<|start_header_id|>", "<|end_header_id|>", "<|eot_id|>"}) {
      at = text.find(token, at);
      ASSERT_NE(at, std::string::npos) << token;
      ++at;
    }
  }
}

TEST(Alphabets, Mask) {
  const auto six = mask_alphabet(scheme_for(6));
  EXPECT_EQ(six.front(), (std::pair<std::string, std::string>{"sadness", "000001"}));
  EXPECT_EQ(six.back(), (std::pair<std::string, std::string>{"surprise", "100000"}));
  EXPECT_EQ(mask_alphabet(scheme_for(2)),
            (std::vector<std::pair<std::string, std::string>>{{"positive", "01"}, {"negative", "10"}}));
  for (int k : {6, 3, 2}) {
    std::set<std::string> seen;
    for (const auto& [cls, bits] : mask_alphabet(scheme_for(k))) {
      EXPECT_EQ(std::count(bits.begin(), bits.end(), '1'), 1);
      EXPECT_EQ(bits.size(), static_cast<std::size_t>(k));
      EXPECT_TRUE(seen.insert(bits).second);
    }
  }
}

TEST(Alphabets, Numeric) {
  const auto six = numeric_alphabet(scheme_for(6));
  EXPECT_EQ(six.front(), (std::pair<std::string, int>{"sadness", 1}));
  EXPECT_EQ(six.back(), (std::pair<std::string, int>{"surprise", 6}));
  EXPECT_EQ(numeric_alphabet(scheme_for(3)),
            (std::vector<std::pair<std::string, int>>{{"positive", 1}, {"negative", 2}, {"neutral", 3}}));
}

TEST(ToolSchema, EnumAndName) {
  const auto t3 = tool_schema(scheme_for(3));
  EXPECT_EQ(t3.name, "report_emotion");
  EXPECT_EQ(t3.emotion_values, (std::vector<std::string>{"positive", "negative", "neutral"}));
  EXPECT_EQ(tool_schema(scheme_for(6)).emotion_values, scheme_for(6).class_names());
}

TEST(AnswerGrammar, Kinds) {
  const auto pct = answer_grammar(PromptStrategy::percent, scheme_for(6));
  EXPECT_EQ(pct.kind, GrammarKind::percent_object);
  EXPECT_EQ(pct.vocabulary.size(), 6u);
  const auto num = answer_grammar(PromptStrategy::numeric, scheme_for(2));
  EXPECT_EQ(num.kind, GrammarKind::integer_code);
  EXPECT_EQ(num.vocabulary, (std::vector<std::string>{"1", "2"}));
  const auto basic = answer_grammar(PromptStrategy::basic, scheme_for(6));
  EXPECT_EQ(basic.kind, GrammarKind::single_label);
  EXPECT_EQ(basic.vocabulary, scheme_for(6).class_names());
}

TEST(Templates, OverrideDirectory) {
  emobench::testing::TempDir dir;
  emobench::testing::write_file(dir / "plain-instruct/basic.txt", "Classify: {{sentence}}\n");
  const PromptRenderer renderer(TemplateSet::load_dir(dir.path()), Involution::default_pairing());
  const auto p = renderer.render(PromptStrategy::basic, dialect(DialectKind::plain_instruct), scheme_for(6), "abc");
  EXPECT_EQ(p.flat(), "Classify: abc");
  const auto q = renderer.render(PromptStrategy::mask, dialect(DialectKind::plain_instruct), scheme_for(6), "abc");
  EXPECT_EQ(q.flat(), render(PromptStrategy::mask, dialect(DialectKind::plain_instruct), scheme_for(6), "abc").flat());
}

TEST(Names, RoundTrip) {
  for (auto s : all_strategies()) EXPECT_EQ(strategy_from_name(strategy_name(s)), s);
  for (auto d : kDialects) EXPECT_EQ(dialect_from_name(dialect_name(d)), d);
  EXPECT_FALSE(strategy_from_name("sarcasm"));
}
