// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <bit>
#include <cctype>
#include <compare>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>

#include "dpa/error.hpp"

namespace dpa {

inline constexpr int kNumOptions = 4;
inline constexpr int kNumAnswerSets = 16;

enum class AnswerKind { Options, NoneMarker };

/// A multi-answer label or response: a non-empty set of options over
/// {A, B, C, D}, or the sentinel "N" (no option is correct).
///
/// Stored as a 4-bit option mask; mask 0 encodes the sentinel, so every
/// representable value is valid and the 16 values map onto indices 0..15.
class AnswerSet {
 public:
  constexpr AnswerSet() = default;

  static constexpr AnswerSet none() { return AnswerSet{}; }

  /// `mask` bit j selects option j (A = bit 0). Mask 0 yields the sentinel.
  static constexpr AnswerSet from_mask(std::uint8_t mask) {
    AnswerSet a;
    a.mask_ = static_cast<std::uint8_t>(mask & 0x0F);
    return a;
  }

  /// Inverse of index(): 0 is "N", 1..15 are option masks.
  static constexpr AnswerSet from_index(int index) {
    return from_mask(static_cast<std::uint8_t>(index));
  }

  constexpr AnswerKind kind() const {
    return mask_ == 0 ? AnswerKind::NoneMarker : AnswerKind::Options;
  }
  constexpr bool is_none() const { return mask_ == 0; }
  constexpr std::uint8_t mask() const { return mask_; }
  constexpr int index() const { return mask_; }
  constexpr bool contains(int option) const { return (mask_ >> option) & 1U; }

  /// Number of chosen options; 0 for the sentinel.
  constexpr int option_count() const { return std::popcount(mask_); }

  constexpr auto operator<=>(const AnswerSet&) const = default;

 private:
  std::uint8_t mask_ = 0;
};

inline constexpr char option_letter(int option) {
  return static_cast<char>('A' + option);
}

inline std::string format_answer_set(AnswerSet a) {
  if (a.is_none()) return "N";
  std::string out;
  for (int j = 0; j < kNumOptions; ++j)
    if (a.contains(j)) out.push_back(option_letter(j));
  return out;
}

inline std::ostream& operator<<(std::ostream& os, AnswerSet a) {
  return os << format_answer_set(a);
}

namespace detail {

struct ParseOutcome {
  std::optional<AnswerSet> value;
  std::string error;
};

inline ParseOutcome parse_answer_set_impl(std::string_view text) {
  std::uint8_t mask = 0;
  bool saw_none = false;
  bool saw_any = false;
  for (char raw : text) {
    const unsigned char c = static_cast<unsigned char>(raw);
    if (std::isspace(c) || c == ',') continue;
    const char up = static_cast<char>(std::toupper(c));
    if (up >= 'A' && up <= 'D') {
      mask = static_cast<std::uint8_t>(mask | (1U << (up - 'A')));
      saw_any = true;
    } else if (up == 'N') {
      saw_none = true;
      saw_any = true;
    } else {
      return {std::nullopt, "invalid character '" + std::string(1, raw) +
                                "' in answer \"" + std::string(text) + "\""};
    }
  }
  if (!saw_any) return {std::nullopt, "empty answer \"" + std::string(text) + "\""};
  if (saw_none && mask != 0)
    return {std::nullopt, "answer mixes N with options: \"" + std::string(text) + "\""};
  return {AnswerSet::from_mask(mask), {}};
}

}  // namespace detail

/// Accepts letters in any case and order, with optional commas/whitespace;
/// duplicates collapse. Throws ParseError on empty input, foreign
/// characters, or "N" mixed with letters.
inline AnswerSet parse_answer_set(std::string_view text) {
  auto outcome = detail::parse_answer_set_impl(text);
  if (!outcome.value) throw ParseError(outcome.error);
  return *outcome.value;
}

inline std::optional<AnswerSet> try_parse_answer_set(std::string_view text) {
  return detail::parse_answer_set_impl(text).value;
}

/// The sentinel is a category of its own: N is a subset of N only.
inline constexpr bool is_subset_of(AnswerSet r, AnswerSet a) {
  if (r.is_none() || a.is_none()) return r.is_none() && a.is_none();
  return (r.mask() & ~a.mask()) == 0;
}

inline constexpr std::array<AnswerSet, kNumAnswerSets> all_answer_sets() {
  std::array<AnswerSet, kNumAnswerSets> out{};
  for (int i = 0; i < kNumAnswerSets; ++i) out[i] = AnswerSet::from_index(i);
  return out;
}

}  // namespace dpa
