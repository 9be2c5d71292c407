// Copyright (c) 2026 expdate authors
// SPDX-License-Identifier: Apache-2.0
//
// 8-bit grayscale PNG round-trip on top of libpng's simplified API, plus the
// in-memory GrayImage type the generator and pipeline exchange.

#pragma once

#include <png.h>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "expdate/common.hpp"
#include "expdate/tensor.hpp"

namespace expdate {

/// Row-major single-channel 8-bit image.
struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // height·width

  std::uint8_t& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }

  static GrayImage blank(std::size_t height, std::size_t width,
                         std::uint8_t value = 0) {
    return GrayImage{height, width,
                     std::vector<std::uint8_t>(height * width, value)};
  }

  bool operator==(const GrayImage& o) const {
    return height == o.height && width == o.width && pixels == o.pixels;
  }
};

inline void write_png_gray(const std::string& path, const GrayImage& img) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.c_str(), 0, img.pixels.data(),
                               static_cast<png_int_32>(img.width), nullptr))
    throw std::runtime_error(detail::cat("failed to write PNG ", path, ": ",
                                         png.message));
}

inline GrayImage read_png_gray(const std::string& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    throw std::runtime_error(detail::cat("failed to open PNG ", path, ": ",
                                         png.message));
  png.format = PNG_FORMAT_GRAY;
  GrayImage img = GrayImage::blank(png.height, png.width);
  if (!png_image_finish_read(&png, nullptr, img.pixels.data(),
                             static_cast<png_int_32>(img.width), nullptr)) {
    png_image_free(&png);
    throw std::runtime_error(detail::cat("failed to decode PNG ", path, ": ",
                                         png.message));
  }
  return img;
}

/// (H, W, 1) float tensor with 255 → 1.0, everything else scaled by 1/255.
template <class T>
Tensor<T> image_to_tensor(const GrayImage& img) {
  std::vector<T> v(img.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = static_cast<T>(img.pixels[i]) / T(255);
  return Tensor<T>({img.height, img.width, 1}, std::move(v));
}

/// Clamps to [0, 1] then quantizes to 8 bits; accepts (H,W,1) or (H,W).
template <class T>
GrayImage tensor_to_image(const Tensor<T>& t) {
  std::size_t h, w;
  if (t.rank() == 3 && t.extent(2) == 1) {
    h = t.extent(0);
    w = t.extent(1);
  } else if (t.rank() == 2) {
    h = t.extent(0);
    w = t.extent(1);
  } else {
    throw std::invalid_argument(detail::cat("tensor_to_image: expected (H,W,1) or ",
                                            "(H,W), got ",
                                            detail::shape_str(t.shape())));
  }
  GrayImage img = GrayImage::blank(h, w);
  const T* p = t.data();
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    T x = std::min(std::max(p[i], T(0)), T(1));
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(static_cast<double>(x) * 255.0));
  }
  return img;
}

}  // namespace expdate
