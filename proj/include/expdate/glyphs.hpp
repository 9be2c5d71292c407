// Copyright (c) 2026 expdate authors
// SPDX-License-Identifier: Apache-2.0
//
// Procedural dot-matrix glyph atlas: the ten Arabic-Indic digits ٠–٩ and the
// date delimiter "/". Every glyph is a hand-designed boolean dot grid of
// exactly 7 rows; widths vary per character (4 to 6 dot columns). Rendering
// parameters (dot pitch, dot radius, inter-glyph gap) live on the atlas so
// dotted and filled renderings agree on placement.

#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "expdate/common.hpp"

namespace expdate {

constexpr std::size_t kGlyphRows = 7;

struct Glyph {
  std::string utf8;                     // one code point, UTF-8
  std::size_t value = 0;                // class index: digits 0–9, "/" = 10
  std::size_t width = 0;                // dot columns
  std::vector<std::uint8_t> dots;       // kGlyphRows · width, 0/1

  bool dot(std::size_t row, std::size_t col) const {
    return dots[row * width + col] != 0;
  }
};

struct GlyphAtlas {
  std::vector<Glyph> glyphs;  // indexed by class value 0..10
  std::size_t dot_pitch = 3;  // px per dot cell
  double dot_radius = 1.0;    // px, disc radius of the dotted rendering
  std::size_t glyph_gap = 0;  // px between consecutive glyphs

  const Glyph& by_value(std::size_t value) const { return glyphs.at(value); }

  const Glyph& by_utf8(std::string_view ch) const {
    for (const Glyph& g : glyphs)
      if (g.utf8 == ch) return g;
    throw std::invalid_argument(detail::cat("no glyph for character \"",
                                            std::string(ch), "\""));
  }
};

namespace detail {

inline Glyph make_glyph(const char* utf8, std::size_t value,
                        std::initializer_list<const char*> rows) {
  Glyph g;
  g.utf8 = utf8;
  g.value = value;
  if (rows.size() != kGlyphRows)
    throw std::logic_error("glyph must have exactly 7 rows");
  g.width = std::string_view(*rows.begin()).size();
  for (const char* row : rows) {
    std::string_view r(row);
    if (r.size() != g.width) throw std::logic_error("ragged glyph definition");
    for (char c : r) g.dots.push_back(c == '#' ? 1 : 0);
  }
  return g;
}

}  // namespace detail

/// The fixed atlas. Shapes are seven-segment-style approximations of the
/// Arabic-Indic digit forms: ٠ dot, ١ stroke, ٢/٣ hooks, ٤ double bow,
/// ٥ ring, ٦ seven-like, ٧ vee, ٨ wedge, ٩ nine-like.
inline const GlyphAtlas& default_atlas() {
  static const GlyphAtlas atlas = [] {
    using detail::make_glyph;
    GlyphAtlas a;
    a.glyphs = {
        make_glyph("٠", 0,
                   {"....",
                    "....",
                    ".##.",
                    "####",
                    ".##.",
                    "....",
                    "...."}),
        make_glyph("١", 1,
                   {"..#.",
                    "..#.",
                    "..#.",
                    "..#.",
                    "..#.",
                    "..#.",
                    "..#."}),
        make_glyph("٢", 2,
                   {".###.",
                    "#...#",
                    "....#",
                    "...#.",
                    "..#..",
                    ".#...",
                    ".#..."}),
        make_glyph("٣", 3,
                   {"#.#.#",
                    "#####",
                    "....#",
                    "...#.",
                    "..#..",
                    ".#...",
                    ".#..."}),
        make_glyph("٤", 4,
                   {".#####",
                    "#.....",
                    "#.....",
                    ".####.",
                    "#.....",
                    "#.....",
                    ".#####"}),
        make_glyph("٥", 5,
                   {".###.",
                    "#...#",
                    "#...#",
                    "#...#",
                    "#...#",
                    "#...#",
                    ".###."}),
        make_glyph("٦", 6,
                   {"####",
                    "...#",
                    "..#.",
                    "..#.",
                    ".#..",
                    ".#..",
                    ".#.."}),
        make_glyph("٧", 7,
                   {"#...#",
                    "#...#",
                    "#...#",
                    ".#.#.",
                    ".#.#.",
                    "..#..",
                    "..#.."}),
        make_glyph("٨", 8,
                   {"..#..",
                    "..#..",
                    ".#.#.",
                    ".#.#.",
                    "#...#",
                    "#...#",
                    "#...#"}),
        make_glyph("٩", 9,
                   {".###.",
                    "#...#",
                    "#...#",
                    ".####",
                    "....#",
                    "....#",
                    "....#"}),
        make_glyph("/", 10,
                   {"...#",
                    "...#",
                    "..#.",
                    "..#.",
                    ".#..",
                    ".#..",
                    "#..."}),
    };
    return a;
  }();
  return atlas;
}

/// Splits a UTF-8 string into per-code-point substrings.
inline std::vector<std::string> utf8_chars(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    unsigned char lead = static_cast<unsigned char>(s[i]);
    std::size_t len = lead < 0x80 ? 1 : lead < 0xE0 ? 2 : lead < 0xF0 ? 3 : 4;
    if (lead >= 0x80 && lead < 0xC0)
      throw std::invalid_argument("malformed UTF-8: continuation byte at start");
    if (i + len > s.size())
      throw std::invalid_argument("malformed UTF-8: truncated sequence");
    out.emplace_back(s.substr(i, len));
    i += len;
  }
  return out;
}

}  // namespace expdate
