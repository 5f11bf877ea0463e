// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cctype>
#include <optional>
#include <string>
#include <string_view>

#include "dpa/answers.hpp"
#include "dpa/error.hpp"

namespace dpa {

inline constexpr std::string_view kThinkOpen = "<think>";
inline constexpr std::string_view kThinkClose = "</think>";
inline constexpr std::string_view kAnswerOpen = "<answer>";
inline constexpr std::string_view kAnswerClose = "</answer>";

enum class RewardMode { Binary, Dpa };

inline const char* to_string(RewardMode mode) {
  return mode == RewardMode::Binary ? "binary" : "dpa";
}

inline RewardMode parse_reward_mode(std::string_view s) {
  if (s == "binary") return RewardMode::Binary;
  if (s == "dpa") return RewardMode::Dpa;
  throw ConfigError("unknown reward mode \"" + std::string(s) + "\" (expected binary|dpa)");
}

struct RewardBreakdown {
  double fmt = 0.0;
  double acc = 0.0;
  double total = 0.0;
};

namespace detail {

inline bool is_blank(std::string_view s) {
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  return true;
}

inline std::size_t count_of(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos;
       pos = hay.find(needle, pos + needle.size()))
    ++n;
  return n;
}

// Empty string on success, otherwise the reason the structure is rejected.
inline std::string check_structure(std::string_view resp, std::string_view& span) {
  for (auto tag : {kThinkOpen, kThinkClose, kAnswerOpen, kAnswerClose}) {
    const auto n = count_of(resp, tag);
    if (n == 0) return "missing " + std::string(tag);
    if (n > 1) return "repeated " + std::string(tag);
  }
  const auto think_open = resp.find(kThinkOpen);
  const auto think_close = resp.find(kThinkClose);
  const auto answer_open = resp.find(kAnswerOpen);
  const auto answer_close = resp.find(kAnswerClose);
  if (!(think_open < think_close && think_close < answer_open && answer_open < answer_close))
    return "tags out of order";
  if (!is_blank(resp.substr(0, think_open))) return "text before <think>";
  const auto gap_begin = think_close + kThinkClose.size();
  if (!is_blank(resp.substr(gap_begin, answer_open - gap_begin)))
    return "text between </think> and <answer>";
  if (!is_blank(resp.substr(answer_close + kAnswerClose.size())))
    return "trailing text after </answer>";
  const auto span_begin = answer_open + kAnswerOpen.size();
  span = resp.substr(span_begin, answer_close - span_begin);
  return {};
}

}  // namespace detail

/// Parses `<think>...</think><answer>...</answer>`: exactly one of each block,
/// in that order, with only whitespace around and between them.
inline std::optional<AnswerSet> try_extract_answer_span(std::string_view resp) {
  std::string_view span;
  if (!detail::check_structure(resp, span).empty()) return std::nullopt;
  return try_parse_answer_set(span);
}

inline AnswerSet extract_answer_span(std::string_view resp) {
  std::string_view span;
  if (auto why = detail::check_structure(resp, span); !why.empty()) throw FormatError(why);
  auto parsed = try_parse_answer_set(span);
  if (!parsed) throw FormatError("unparseable answer span \"" + std::string(span) + "\"");
  return *parsed;
}

inline double format_reward(std::string_view resp) {
  return try_extract_answer_span(resp) ? 1.0 : 0.0;
}

/// |R| / |A| when R is contained in A, else 0; the sentinel counts as a
/// single element.
inline double dpa_accuracy_reward(AnswerSet r, AnswerSet a) {
  if (!is_subset_of(r, a)) return 0.0;
  if (r.is_none()) return 1.0;
  return static_cast<double>(r.option_count()) / static_cast<double>(a.option_count());
}

inline double binary_accuracy_reward(AnswerSet r, AnswerSet a) { return r == a ? 1.0 : 0.0; }

inline double accuracy_reward(AnswerSet r, AnswerSet a, RewardMode mode) {
  return mode == RewardMode::Dpa ? dpa_accuracy_reward(r, a) : binary_accuracy_reward(r, a);
}

/// r = r_fmt + r_acc; accuracy is only scored for well-formed responses.
inline RewardBreakdown total_reward(std::string_view resp, AnswerSet label, RewardMode mode) {
  RewardBreakdown out;
  if (auto pred = try_extract_answer_span(resp)) {
    out.fmt = 1.0;
    out.acc = accuracy_reward(*pred, label, mode);
  }
  out.total = out.fmt + out.acc;
  return out;
}

}  // namespace dpa
