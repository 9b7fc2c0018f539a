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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>

#include "roadcode/image.hpp"
#include "roadcode/rng.hpp"

namespace roadcode {

enum class NoiseKind { Gaussian, SaltPepper, Speckle, Periodic, Quantisation };

inline constexpr std::array<NoiseKind, 5> kAllNoiseKinds = {
    NoiseKind::Gaussian, NoiseKind::SaltPepper, NoiseKind::Speckle, NoiseKind::Periodic, NoiseKind::Quantisation};

constexpr std::string_view noise_name(NoiseKind kind) noexcept {
  switch (kind) {
    case NoiseKind::Gaussian: return "gaussian";
    case NoiseKind::SaltPepper: return "saltpepper";
    case NoiseKind::Speckle: return "speckle";
    case NoiseKind::Periodic: return "periodic";
    case NoiseKind::Quantisation: return "quantisation";
  }
  return "";
}

inline std::optional<NoiseKind> parse_noise_kind(std::string_view name) {
  for (auto k : kAllNoiseKinds)
    if (noise_name(k) == name) return k;
  if (name == "quantization") return NoiseKind::Quantisation;
  if (name == "salt-pepper" || name == "salt_pepper") return NoiseKind::SaltPepper;
  return std::nullopt;
}

/// Magnitudes on the 0..255 intensity scale unless noted.
struct NoiseParams {
  double gaussian_sigma = 12.0;
  double salt_pepper_density = 0.02;  // fraction of pixels replaced
  double speckle_variance = 0.04;     // multiplicative, unit scale
  double periodic_amplitude = 20.0;
  double periodic_period_px = 16.0;   // wavelength along the diagonal pattern
  int quantisation_levels = 8;        // 2^3
};

namespace detail {

inline std::uint8_t clamp_to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace detail

/// Nearest of `levels` evenly spaced values spanning 0..255.
inline std::uint8_t quantise(std::uint8_t value, int levels) {
  const double step = 255.0 / static_cast<double>(levels - 1);
  const double k = std::round(static_cast<double>(value) / step);
  return detail::clamp_to_byte(k * step);
}

/// Applies one noise model. Shape and channel count are preserved; alpha is
/// left untouched on RGBA input. Same (image, kind, seed, params) gives the
/// same bytes on every platform.
inline Image augment_image(const Image& image, NoiseKind kind, std::uint64_t seed,
                           const NoiseParams& params = {}) {
  require_supported_format(image);
  Image out = image;
  Rng rng(seed);
  const int color_channels = image.channels == 4 ? 3 : image.channels;

  switch (kind) {
    case NoiseKind::Gaussian:
      for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
          for (int c = 0; c < color_channels; ++c)
            out.at(x, y, c) = detail::clamp_to_byte(image.at(x, y, c) + params.gaussian_sigma * rng.normal());
      break;

    case NoiseKind::SaltPepper:
      for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) {
          const double u = rng.uniform();
          if (u >= params.salt_pepper_density) continue;
          const std::uint8_t v = u < params.salt_pepper_density / 2.0 ? 0 : 255;
          for (int c = 0; c < color_channels; ++c) out.at(x, y, c) = v;
        }
      break;

    case NoiseKind::Speckle: {
      const double sigma = std::sqrt(params.speckle_variance);
      for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
          for (int c = 0; c < color_channels; ++c) {
            const double v = image.at(x, y, c);
            out.at(x, y, c) = detail::clamp_to_byte(v + v * sigma * rng.normal());
          }
      break;
    }

    case NoiseKind::Periodic: {
      const double phase = 2.0 * std::numbers::pi * rng.uniform();
      const double k = 2.0 * std::numbers::pi / params.periodic_period_px;
      for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) {
          const double delta = params.periodic_amplitude * std::sin(k * (x + 0.5 * y) + phase);
          for (int c = 0; c < color_channels; ++c) out.at(x, y, c) = detail::clamp_to_byte(image.at(x, y, c) + delta);
        }
      break;
    }

    case NoiseKind::Quantisation: {
      if (params.quantisation_levels < 2)
        fail(ErrorCode::UnsupportedPixelFormat, "quantisation needs at least 2 levels");
      for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
          for (int c = 0; c < color_channels; ++c) out.at(x, y, c) = quantise(image.at(x, y, c), params.quantisation_levels);
      break;
    }
  }
  return out;
}

}  // namespace roadcode
