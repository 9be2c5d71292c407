// Copyright (c) 2026 expdate authors
// SPDX-License-Identifier: Apache-2.0
//
// Expiry-date text in the yyyy/mm/dd pattern over the Arabic-Indic alphabet.
// Realistic dates are drawn uniformly from the valid calendar days of
// 2019–2027; unrealistic dates draw every digit position uniformly with no
// calendar constraint.

#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "expdate/glyphs.hpp"
#include "expdate/rng.hpp"

namespace expdate {

enum class DateKind { realistic, unrealistic };

inline std::string date_kind_name(DateKind k) {
  return k == DateKind::realistic ? "realistic" : "unrealistic";
}

inline std::optional<DateKind> parse_date_kind(std::string_view s) {
  if (s == "realistic") return DateKind::realistic;
  if (s == "unrealistic") return DateKind::unrealistic;
  return std::nullopt;
}

struct DateText {
  std::string text;  // UTF-8, 10 code points: dddd/dd/dd
  DateKind kind = DateKind::unrealistic;
};

constexpr int kYearMin = 2019;
constexpr int kYearMax = 2027;

/// Class values (digits 0–9, "/" = 10) of the 10 code points, after pattern
/// validation.
inline std::vector<std::size_t> label_values(std::string_view text) {
  std::vector<std::string> chars = utf8_chars(text);
  if (chars.size() != 10)
    throw std::invalid_argument(detail::cat("date label must have 10 characters, got ",
                                            chars.size()));
  const GlyphAtlas& atlas = default_atlas();
  std::vector<std::size_t> values;
  values.reserve(10);
  for (std::size_t i = 0; i < 10; ++i) {
    std::size_t v = atlas.by_utf8(chars[i]).value;
    bool is_slash_pos = i == 4 || i == 7;
    if (is_slash_pos != (v == 10))
      throw std::invalid_argument(detail::cat("date label violates dddd/dd/dd at position ",
                                              i, ": \"", std::string(text), "\""));
    values.push_back(v);
  }
  return values;
}

/// Arabic-Indic text from class values (the inverse of label_values).
inline std::string text_from_values(const std::vector<std::size_t>& values) {
  const GlyphAtlas& atlas = default_atlas();
  std::string out;
  for (std::size_t v : values) out += atlas.by_value(v).utf8;
  return out;
}

/// ASCII transliteration: ٢٠٢٥/٠١/٣٠ → 2025/01/30.
inline std::string to_ascii_digits(std::string_view text) {
  const GlyphAtlas& atlas = default_atlas();
  std::string out;
  for (const std::string& ch : utf8_chars(text)) {
    std::size_t v = atlas.by_utf8(ch).value;
    out += v == 10 ? '/' : static_cast<char>('0' + v);
  }
  return out;
}

/// Whether the label's digits form a valid calendar date in [2019, 2027].
inline bool is_realistic_label(const std::vector<std::size_t>& values) {
  if (values.size() != 10) return false;
  auto digit = [&](std::size_t i) { return static_cast<int>(values[i]); };
  int y = digit(0) * 1000 + digit(1) * 100 + digit(2) * 10 + digit(3);
  int m = digit(5) * 10 + digit(6);
  int d = digit(8) * 10 + digit(9);
  if (y < kYearMin || y > kYearMax) return false;
  std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{unsigned(m)},
                                  std::chrono::day{unsigned(d)}};
  return ymd.ok();
}

/// Uniform digits in every d position; no calendar constraint.
inline DateText sample_unrealistic_date(Rng& rng) {
  const GlyphAtlas& atlas = default_atlas();
  std::string text;
  for (std::size_t i = 0; i < 10; ++i) {
    if (i == 4 || i == 7)
      text += atlas.by_value(10).utf8;
    else
      text += atlas.by_value(rng.uniform_int(10)).utf8;
  }
  return DateText{std::move(text), DateKind::unrealistic};
}

/// Uniform over the 3287 valid calendar days of 2019-01-01 .. 2027-12-31.
inline DateText sample_realistic_date(Rng& rng) {
  using namespace std::chrono;
  static const sys_days first = sys_days{year{kYearMin} / January / 1};
  static const sys_days last = sys_days{year{kYearMax} / December / 31};
  const std::uint64_t span = static_cast<std::uint64_t>((last - first).count()) + 1;
  sys_days day = first + days{static_cast<int>(rng.uniform_int(span))};
  year_month_day ymd{day};
  int y = static_cast<int>(ymd.year());
  unsigned m = static_cast<unsigned>(ymd.month());
  unsigned d = static_cast<unsigned>(ymd.day());
  std::vector<std::size_t> values{
      static_cast<std::size_t>(y / 1000 % 10), static_cast<std::size_t>(y / 100 % 10),
      static_cast<std::size_t>(y / 10 % 10),   static_cast<std::size_t>(y % 10),
      10,
      static_cast<std::size_t>(m / 10),        static_cast<std::size_t>(m % 10),
      10,
      static_cast<std::size_t>(d / 10),        static_cast<std::size_t>(d % 10)};
  return DateText{text_from_values(values), DateKind::realistic};
}

inline DateText sample_date(Rng& rng, DateKind kind) {
  return kind == DateKind::realistic ? sample_realistic_date(rng)
                                     : sample_unrealistic_date(rng);
}

}  // namespace expdate
