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

#include <utility>

#include "roadcode/panorama.hpp"

namespace roadcode::testing {

/// Black 362x181 single-channel panorama with one lit pixel on the horizon
/// row at `column`.
inline Image lit_panorama(int column) {
  Image pano(362, 181, 1);
  pano.at(column, 90, 0) = 255;
  return pano;
}

/// Yaw, in degrees, of a panorama column centre.
inline double column_yaw(const Image& pano, int column) { return (column + 0.5) * 360.0 / pano.width; }

/// Intensity-weighted centroid of channel 0; (-1, -1) for a black image.
inline std::pair<double, double> centroid(const Image& img) {
  double sum = 0, sx = 0, sy = 0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double v = img.at(x, y, 0);
      sum += v;
      sx += v * x;
      sy += v * y;
    }
  if (sum == 0) return {-1, -1};
  return {sx / sum, sy / sum};
}

}  // namespace roadcode::testing
