// Copyright 2026 The mosanet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Minimal RGB raster output through libpng, used for correlation heatmaps.

#pragma once

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mosanet/error.hpp"

namespace mosanet {

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB

  RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 255) {}

  void set(int x, int y, std::array<std::uint8_t, 3> c) {
    auto* p = &pixels[(static_cast<std::size_t>(y) * width + x) * 3];
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }
};

namespace detail {

struct PngFile {
  std::FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngFile() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
  }
};

}  // namespace detail

inline void write_png(const std::filesystem::path& path, const RgbImage& img) {
  detail::PngFile f;
  f.fp = std::fopen(path.string().c_str(), "wb");
  if (!f.fp) throw IoError("cannot open " + path.string() + " for writing");
  f.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!f.png) throw IoError("png_create_write_struct failed");
  f.info = png_create_info_struct(f.png);
  if (!f.info) throw IoError("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(f.png))) throw IoError("libpng failed writing " + path.string());
  png_init_io(f.png, f.fp);
  png_set_IHDR(f.png, f.info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(f.png, f.info);
  for (int y = 0; y < img.height; ++y) {
    png_write_row(f.png, const_cast<png_bytep>(&img.pixels[static_cast<std::size_t>(y) * img.width * 3]));
  }
  png_write_end(f.png, nullptr);
}

// Diverging map: -1 blue, 0 white, +1 red.
inline std::array<std::uint8_t, 3> diverging_color(double v) {
  v = std::clamp(std::isfinite(v) ? v : 0.0, -1.0, 1.0);
  const auto fade = [](double t) { return static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - t))); };
  if (v >= 0) return {255, fade(v), fade(v)};
  return {fade(-v), fade(-v), 255};
}

// One square cell per matrix entry, separated by one-pixel grey grid lines.
inline RgbImage render_heatmap(const Eigen::MatrixXd& m, int cell = 48) {
  const int rows = static_cast<int>(m.rows());
  const int cols = static_cast<int>(m.cols());
  RgbImage img(cols * cell + 1, rows * cell + 1);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (x % cell == 0 || y % cell == 0) {
        img.set(x, y, {160, 160, 160});
      } else {
        img.set(x, y, diverging_color(m(y / cell, x / cell)));
      }
    }
  }
  return img;
}

}  // namespace mosanet
