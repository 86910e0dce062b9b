// Copyright 2026 The AHIQ Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// 8-bit RGB images: PNG (libpng) and uncompressed BMP decode/encode, plus
// binary PPM output.

#pragma once

#include <png.h>

#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "ahiq/core.hpp"

namespace ahiq {

// Interleaved RGB, row-major, top row first.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 3;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::uint8_t fill = 0, std::size_t c = 3)
      : width(w), height(h), channels(c), pixels(w * h * c, fill) {}

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) {
    return pixels[(y * width + x) * channels + c];
  }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * channels + c];
  }
  bool same_size(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
  bool operator==(const Image&) const = default;
};

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw ImageError("cannot open " + path.string());
  return f;
}

inline void png_error_handler(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = msg;
  png_longjmp(png, 1);
}

inline void png_warning_handler(png_structp, png_const_charp) {}

inline Image read_png(const std::filesystem::path& path) {
  auto file = open_file(path, "rb");
  std::string error;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error,
                                           png_error_handler, png_warning_handler);
  if (!png) throw ImageError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  Image img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageError(path.string() + ": " + error);
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const auto depth = png_get_bit_depth(png, info);
  const auto color = png_get_color_type(png, info);
  if (depth == 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageError(path.string() + ": 16-bit PNG is not supported");
  }
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  img = Image(png_get_image_width(png, info), png_get_image_height(png, info));
  if (png_get_rowbytes(png, info) != img.width * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageError(path.string() + ": unexpected PNG row layout");
  }
  rows.resize(img.height);
  for (std::size_t y = 0; y < img.height; ++y) rows[y] = img.pixels.data() + y * img.width * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline std::uint32_t le32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 |
         std::uint32_t{p[3]} << 24;
}
inline std::uint16_t le16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

inline Image decode_bmp(const std::vector<std::uint8_t>& b, const std::string& name) {
  if (b.size() < 54 || b[0] != 'B' || b[1] != 'M') throw ImageError(name + ": not a BMP file");
  const std::uint32_t data_offset = le32(&b[10]);
  const auto width = static_cast<std::int32_t>(le32(&b[18]));
  const auto height = static_cast<std::int32_t>(le32(&b[22]));
  const std::uint16_t bpp = le16(&b[28]);
  const std::uint32_t compression = le32(&b[30]);
  if (width <= 0 || height == 0) throw ImageError(name + ": bad BMP dimensions");
  if ((bpp != 24 && bpp != 32) || (compression != 0 && compression != 3)) {
    throw ImageError(name + ": only uncompressed 24/32-bit BMP is supported");
  }
  const bool bottom_up = height > 0;
  const std::size_t w = static_cast<std::size_t>(width);
  const std::size_t h = static_cast<std::size_t>(bottom_up ? height : -height);
  const std::size_t step = bpp / 8;
  const std::size_t stride = (w * step + 3) & ~std::size_t{3};
  if (data_offset + stride * h > b.size()) throw ImageError(name + ": truncated BMP");
  Image img(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t src_row = bottom_up ? h - 1 - y : y;
    const std::uint8_t* row = b.data() + data_offset + src_row * stride;
    for (std::size_t x = 0; x < w; ++x) {
      img.at(y, x, 0) = row[x * step + 2];
      img.at(y, x, 1) = row[x * step + 1];
      img.at(y, x, 2) = row[x * step + 0];
    }
  }
  return img;
}

}  // namespace detail

// Decodes PNG or BMP by signature.
inline Image read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                  std::istreambuf_iterator<char>()};
  static constexpr std::uint8_t kPng[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(kPng, kPng + 8, bytes.begin())) {
    return detail::read_png(path);
  }
  if (bytes.size() >= 2 && bytes[0] == 'B' && bytes[1] == 'M') {
    return detail::decode_bmp(bytes, path.string());
  }
  throw ImageError(path.string() + ": unsupported image format (PNG or BMP expected)");
}

inline void write_png(const Image& img, const std::filesystem::path& path) {
  if (img.channels != 3) throw ImageError("write_png expects RGB");
  auto file = detail::open_file(path, "wb");
  std::string error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error,
                                            detail::png_error_handler,
                                            detail::png_warning_handler);
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows(img.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageError(path.string() + ": " + error);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  for (std::size_t y = 0; y < img.height; ++y) {
    rows[y] = const_cast<png_bytep>(img.pixels.data() + y * img.width * 3);
  }
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// 24-bit bottom-up BMP.
inline void write_bmp(const Image& img, const std::filesystem::path& path) {
  if (img.channels != 3) throw ImageError("write_bmp expects RGB");
  const std::size_t stride = (img.width * 3 + 3) & ~std::size_t{3};
  const std::size_t data_size = stride * img.height;
  std::vector<std::uint8_t> b(54 + data_size, 0);
  auto put32 = [&](std::size_t at, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
  };
  b[0] = 'B';
  b[1] = 'M';
  put32(2, static_cast<std::uint32_t>(b.size()));
  put32(10, 54);
  put32(14, 40);
  put32(18, static_cast<std::uint32_t>(img.width));
  put32(22, static_cast<std::uint32_t>(img.height));
  b[26] = 1;
  b[28] = 24;
  put32(34, static_cast<std::uint32_t>(data_size));
  for (std::size_t y = 0; y < img.height; ++y) {
    std::uint8_t* row = b.data() + 54 + (img.height - 1 - y) * stride;
    for (std::size_t x = 0; x < img.width; ++x) {
      row[x * 3 + 0] = img.at(y, x, 2);
      row[x * 3 + 1] = img.at(y, x, 1);
      row[x * 3 + 2] = img.at(y, x, 0);
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ImageError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

// Binary P6; grayscale input (channels == 1) is replicated to RGB.
inline void write_ppm(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ImageError("cannot open " + path.string() + " for writing");
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  for (std::size_t i = 0; i < img.width * img.height; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      out.put(static_cast<char>(img.pixels[i * img.channels + (img.channels == 1 ? 0 : c)]));
    }
  }
  if (!out) throw ImageError("failed writing " + path.string());
}

}  // namespace ahiq
