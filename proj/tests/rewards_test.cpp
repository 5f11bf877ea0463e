// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "dpa/answers.hpp"
#include "dpa/rewards.hpp"

using namespace dpa;

namespace {

std::string wrap(std::string_view answer, std::string_view think = "t") {
  return "<think>" + std::string(think) + "</think><answer>" + std::string(answer) + "</answer>";
}

// Reference reward written from the set definition: count members of R,
// confirm each is a member of A, then divide. N is the singleton {N}.
double dpa_oracle(AnswerSet r, AnswerSet a) {
  auto members = [](AnswerSet s) {
    std::vector<char> out;
    if (s.is_none()) return std::vector<char>{'N'};
    for (char c : std::string("ABCD"))
      if (format_answer_set(s).find(c) != std::string::npos) out.push_back(c);
    return out;
  };
  const auto rm = members(r);
  const auto am = members(a);
  for (char c : rm) {
    bool found = false;
    for (char d : am) found = found || c == d;
    if (!found) return 0.0;
  }
  return static_cast<double>(rm.size()) / static_cast<double>(am.size());
}

}  // namespace

TEST(ExtractAnswerSpan, Examples) {
  EXPECT_EQ(extract_answer_span("<think>shadow wrong on B</think><answer>AC</answer>"),
            parse_answer_set("AC"));
  EXPECT_THROW(extract_answer_span("<answer>AC</answer>"), FormatError);
  EXPECT_EQ(extract_answer_span("<think>t</think><answer>CA</answer>"), parse_answer_set("AC"));
}

TEST(ExtractAnswerSpan, StructureRules) {
  EXPECT_TRUE(try_extract_answer_span("  <think>x</think>\n <answer>N</answer>\n"));
  EXPECT_FALSE(try_extract_answer_span("<answer>A</answer><think>x</think>"));
  EXPECT_FALSE(try_extract_answer_span("hi <think>x</think><answer>A</answer>"));
  EXPECT_FALSE(try_extract_answer_span("<think>x</think>so<answer>A</answer>"));
  EXPECT_FALSE(try_extract_answer_span("<think>x</think><answer>A</answer>done"));
  EXPECT_FALSE(try_extract_answer_span("<think>x</think><answer>NA</answer>"));
  EXPECT_FALSE(try_extract_answer_span("<think>x</think><answer></answer>"));
  EXPECT_FALSE(try_extract_answer_span("<think><think>x</think><answer>A</answer>"));
  EXPECT_FALSE(try_extract_answer_span(""));
}

TEST(FormatReward, Examples) {
  EXPECT_EQ(format_reward(wrap("AC")), 1.0);
  EXPECT_EQ(format_reward("garbled"), 0.0);
  EXPECT_EQ(format_reward("<think>t</think><answer>A</answer><answer>B</answer>"), 0.0);
  EXPECT_EQ(format_reward("<think></think><answer>B</answer>"), 1.0);
}

TEST(DpaAccuracyReward, Examples) {
  EXPECT_NEAR(dpa_accuracy_reward(parse_answer_set("AC"), parse_answer_set("ACD")), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(dpa_accuracy_reward(parse_answer_set("AB"), parse_answer_set("ACD")), 0.0);
  EXPECT_EQ(dpa_accuracy_reward(parse_answer_set("ACD"), parse_answer_set("ACD")), 1.0);
  EXPECT_EQ(dpa_accuracy_reward(AnswerSet::none(), AnswerSet::none()), 1.0);
  EXPECT_EQ(dpa_accuracy_reward(AnswerSet::none(), parse_answer_set("A")), 0.0);
  EXPECT_EQ(dpa_accuracy_reward(parse_answer_set("A"), AnswerSet::none()), 0.0);
}

TEST(DpaAccuracyReward, MatchesMembershipOracleOnAllPairs) {
  for (auto r : all_answer_sets())
    for (auto a : all_answer_sets())
      EXPECT_NEAR(dpa_accuracy_reward(r, a), dpa_oracle(r, a), 1e-12)
          << format_answer_set(r) << " vs " << format_answer_set(a);
}

TEST(DpaAccuracyReward, StrictlyMonotoneInsideLabel) {
  for (auto a : all_answer_sets())
    for (auto r1 : all_answer_sets())
      for (auto r2 : all_answer_sets())
        if (r1 != r2 && is_subset_of(r1, r2) && is_subset_of(r2, a)) {
          EXPECT_LT(dpa_accuracy_reward(r1, a), dpa_accuracy_reward(r2, a));
        }
}

TEST(DpaAccuracyReward, DominatesBinary) {
  for (auto r : all_answer_sets())
    for (auto a : all_answer_sets()) {
      const double d = dpa_accuracy_reward(r, a);
      const double b = binary_accuracy_reward(r, a);
      EXPECT_GE(d, b);
      EXPECT_EQ(d == b, r == a || !is_subset_of(r, a));
    }
}

TEST(BinaryAccuracyReward, Examples) {
  EXPECT_EQ(binary_accuracy_reward(parse_answer_set("AC"), parse_answer_set("AC")), 1.0);
  EXPECT_EQ(binary_accuracy_reward(parse_answer_set("AC"), parse_answer_set("ACD")), 0.0);
  EXPECT_EQ(binary_accuracy_reward(AnswerSet::none(), parse_answer_set("A")), 0.0);
}

TEST(TotalReward, Examples) {
  const auto d = total_reward(wrap("AC"), parse_answer_set("ACD"), RewardMode::Dpa);
  EXPECT_EQ(d.fmt, 1.0);
  EXPECT_NEAR(d.acc, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(d.total, 5.0 / 3.0, 1e-12);
  const auto m = total_reward("<answer>AC</answer>", parse_answer_set("AC"), RewardMode::Dpa);
  EXPECT_EQ(m.fmt, 0.0);
  EXPECT_EQ(m.acc, 0.0);
  EXPECT_EQ(m.total, 0.0);
  const auto b = total_reward(wrap("ACD"), parse_answer_set("ACD"), RewardMode::Binary);
  EXPECT_EQ(b.fmt, 1.0);
  EXPECT_EQ(b.acc, 1.0);
  EXPECT_EQ(b.total, 2.0);
}

TEST(TotalReward, RangeOverAllWellFormedAndMalformedResponses) {
  std::vector<std::string> responses = {"", "junk", "<answer>A</answer>", wrap("NA")};
  for (auto r : all_answer_sets()) responses.push_back(wrap(format_answer_set(r)));
  for (const auto& resp : responses)
    for (auto a : all_answer_sets())
      for (auto mode : {RewardMode::Binary, RewardMode::Dpa}) {
        const auto t = total_reward(resp, a, mode);
        EXPECT_GE(t.total, 0.0);
        EXPECT_LE(t.total, 2.0);
        EXPECT_EQ(t.total, t.fmt + t.acc);
      }
}

TEST(RewardMode, Names) {
  EXPECT_EQ(parse_reward_mode("dpa"), RewardMode::Dpa);
  EXPECT_EQ(parse_reward_mode("binary"), RewardMode::Binary);
  EXPECT_STREQ(to_string(RewardMode::Dpa), "dpa");
  EXPECT_THROW(parse_reward_mode("other"), ConfigError);
}
