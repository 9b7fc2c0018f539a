/* Copyright 2026 The roadcode Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "roadcode/error.hpp"

namespace roadcode {

/// 8-bit interleaved pixel buffer, row-major, `channels` samples per pixel.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c),
        pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c), fill) {}

  bool empty() const noexcept { return width <= 0 || height <= 0 || pixels.empty(); }

  std::size_t offset(int x, int y) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
           static_cast<std::size_t>(channels);
  }

  std::uint8_t& at(int x, int y, int c) { return pixels[offset(x, y) + static_cast<std::size_t>(c)]; }
  std::uint8_t at(int x, int y, int c) const { return pixels[offset(x, y) + static_cast<std::size_t>(c)]; }

  bool operator==(const Image&) const = default;
};

/// Gray, RGB and RGBA buffers whose byte count matches their dimensions.
inline void require_supported_format(const Image& image) {
  if (image.empty()) fail(ErrorCode::UnsupportedPixelFormat, "empty image");
  if (image.channels != 1 && image.channels != 3 && image.channels != 4)
    fail(ErrorCode::UnsupportedPixelFormat, std::to_string(image.channels) + " channels");
  if (image.pixels.size() != image.offset(0, image.height))
    fail(ErrorCode::UnsupportedPixelFormat, "buffer size does not match dimensions");
}

/// FNV-1a over dimensions and pixels; used for golden checksums.
inline std::uint64_t image_checksum(const Image& image) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::uint8_t b) {
    h ^= b;
    h *= 1099511628211ULL;
  };
  for (int v : {image.width, image.height, image.channels})
    for (int i = 0; i < 4; ++i) mix(static_cast<std::uint8_t>(static_cast<unsigned>(v) >> (8 * i)));
  for (auto b : image.pixels) mix(b);
  return h;
}

}  // namespace roadcode
