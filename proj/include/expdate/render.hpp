// Copyright (c) 2026 expdate authors
// SPDX-License-Identifier: Apache-2.0
//
// Rasterization of date text from the glyph atlas. Both renderings share one
// layout: glyph dot cells are dot_pitch px square, glyphs advance by their
// width in cells plus the atlas gap. The dot-matrix rendering draws a disc
// per set cell; the filled rendering paints the whole cell, so its foreground
// strictly contains the dotted one at equal placement.

#pragma once

#include <cmath>
#include <string_view>
#include <vector>

#include "expdate/dates.hpp"
#include "expdate/glyphs.hpp"
#include "expdate/image_io.hpp"

namespace expdate {

constexpr std::uint8_t kForeground = 255;

inline std::size_t text_height_px(const GlyphAtlas& atlas) {
  return kGlyphRows * atlas.dot_pitch;
}

inline std::size_t text_width_px(const std::vector<std::size_t>& values,
                                 const GlyphAtlas& atlas) {
  if (values.empty()) return 0;
  std::size_t cols = 0;
  for (std::size_t v : values) cols += atlas.by_value(v).width;
  return cols * atlas.dot_pitch + atlas.glyph_gap * (values.size() - 1);
}

/// Width of the widest possible dddd/dd/dd string under this atlas.
inline std::size_t max_date_width_px(const GlyphAtlas& atlas) {
  std::size_t widest_digit = 0;
  for (std::size_t v = 0; v < 10; ++v)
    widest_digit = std::max(widest_digit, atlas.by_value(v).width);
  std::size_t cols = 8 * widest_digit + 2 * atlas.by_value(10).width;
  return cols * atlas.dot_pitch + atlas.glyph_gap * 9;
}

namespace detail {

template <class PaintCell>
void render_text(const std::vector<std::size_t>& values, const GlyphAtlas& atlas,
                 GrayImage& img, std::size_t dx, std::size_t dy, PaintCell&& paint) {
  std::size_t need_w = text_width_px(values, atlas);
  std::size_t need_h = text_height_px(atlas);
  if (dx + need_w > img.width || dy + need_h > img.height)
    throw std::invalid_argument(cat("text does not fit canvas: needs ", need_w, "x",
                                    need_h, " at offset (", dx, ", ", dy,
                                    "), canvas is ", img.width, "x", img.height));
  std::size_t pen_x = dx;
  for (std::size_t v : values) {
    const Glyph& g = atlas.by_value(v);
    for (std::size_t r = 0; r < kGlyphRows; ++r)
      for (std::size_t c = 0; c < g.width; ++c)
        if (g.dot(r, c))
          paint(img, pen_x + c * atlas.dot_pitch, dy + r * atlas.dot_pitch);
    pen_x += g.width * atlas.dot_pitch + atlas.glyph_gap;
  }
}

}  // namespace detail

/// Dot-matrix rendering: one disc per set cell, binarized foreground.
inline GrayImage render_dotmatrix(std::string_view text, const GlyphAtlas& atlas,
                                  std::size_t height, std::size_t width,
                                  std::size_t dx = 0, std::size_t dy = 0) {
  GrayImage img = GrayImage::blank(height, width);
  std::size_t p = atlas.dot_pitch;
  double center_off = static_cast<double>((p - 1) / 2) + 0.5;
  double r2 = atlas.dot_radius * atlas.dot_radius;
  detail::render_text(label_values(text), atlas, img, dx, dy,
                      [&](GrayImage& im, std::size_t cx, std::size_t cy) {
                        double ccx = static_cast<double>(cx) + center_off;
                        double ccy = static_cast<double>(cy) + center_off;
                        for (std::size_t y = cy; y < cy + p; ++y)
                          for (std::size_t x = cx; x < cx + p; ++x) {
                            double ddx = static_cast<double>(x) + 0.5 - ccx;
                            double ddy = static_cast<double>(y) + 0.5 - ccy;
                            if (ddx * ddx + ddy * ddy <= r2)
                              im.at(y, x) = kForeground;
                          }
                      });
  return img;
}

/// Filled rendering: every set cell painted solid, producing joined strokes.
inline GrayImage render_filled(std::string_view text, const GlyphAtlas& atlas,
                               std::size_t height, std::size_t width,
                               std::size_t dx = 0, std::size_t dy = 0) {
  GrayImage img = GrayImage::blank(height, width);
  std::size_t p = atlas.dot_pitch;
  detail::render_text(label_values(text), atlas, img, dx, dy,
                      [&](GrayImage& im, std::size_t cx, std::size_t cy) {
                        for (std::size_t y = cy; y < cy + p; ++y)
                          for (std::size_t x = cx; x < cx + p; ++x)
                            im.at(y, x) = kForeground;
                      });
  return img;
}

/// The default atlas scaled so the widest date fits the canvas: pitch 3
/// when possible, else pitch 2 (with a 1-px dot), else an error.
inline GlyphAtlas atlas_for_canvas(std::size_t height, std::size_t width) {
  GlyphAtlas atlas = default_atlas();
  for (auto [pitch, radius] : {std::pair<std::size_t, double>{3, 1.0}, {2, 0.5}}) {
    atlas.dot_pitch = pitch;
    atlas.dot_radius = radius;
    if (text_height_px(atlas) <= height && max_date_width_px(atlas) <= width)
      return atlas;
  }
  throw std::invalid_argument(detail::cat("canvas ", height, "x", width,
                                          " cannot hold the widest date even at ",
                                          "pitch 2 (needs ",
                                          max_date_width_px(atlas), "x",
                                          text_height_px(atlas), ")"));
}

}  // namespace expdate
