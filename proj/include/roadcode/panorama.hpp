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
#include <cmath>
#include <numbers>
#include <vector>

#include "roadcode/error.hpp"
#include "roadcode/image.hpp"

namespace roadcode {

/// Output frame matching native ThaiRAP imagery: 1600 wide, 1200 tall.
inline constexpr int kViewWidth = 1600;
inline constexpr int kViewHeight = 1200;

struct ViewSpec {
  double heading_deg = 0.0;  // yaw of the view centre, pano column convention below
  double fov_deg = 90.0;     // horizontal field of view
  double pitch_deg = 0.0;
  int width = kViewWidth;
  int height = kViewHeight;
};

/// Bilinear sample of an equirectangular panorama at continuous pixel
/// coordinates (x wraps horizontally, y clamps).
inline void sample_equirect(const Image& pano, double x, double y, double* out) {
  const int w = pano.width, h = pano.height;
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const double fx = std::floor(x), fy = std::floor(y);
  const double ax = x - fx, ay = y - fy;
  auto wrap = [w](long v) { return static_cast<int>(((v % w) + w) % w); };
  const int x0 = wrap(static_cast<long>(fx)), x1 = wrap(static_cast<long>(fx) + 1);
  const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, h - 1);
  for (int c = 0; c < pano.channels; ++c) {
    const double top = (1 - ax) * pano.at(x0, y0, c) + ax * pano.at(x1, y0, c);
    const double bottom = (1 - ax) * pano.at(x0, y1, c) + ax * pano.at(x1, y1, c);
    out[c] = (1 - ay) * top + ay * bottom;
  }
}

/// Gnomonic (rectilinear) view of an equirectangular panorama.
///
/// Panorama convention: column centre i sits at yaw (i + 0.5) * 360 / W
/// degrees and row centre j at pitch 90 - (j + 0.5) * 180 / H. The output's
/// optical axis passes through the geometric centre of the frame, so a ray
/// at (heading, pitch) lands at ((W-1)/2, (H-1)/2) in output pixel indices.
inline Image reproject_panorama(const Image& pano, const ViewSpec& view) {
  require_supported_format(pano);
  if (pano.width != 2 * pano.height)
    fail(ErrorCode::NotEquirectangular,
         std::to_string(pano.width) + "x" + std::to_string(pano.height) + " is not a 2:1 panorama");
  if (!(view.fov_deg > 0.0 && view.fov_deg < 180.0))
    fail(ErrorCode::DegenerateFov, "fov " + std::to_string(view.fov_deg) + " outside (0, 180)");

  constexpr double kDeg = std::numbers::pi / 180.0;
  const double focal = (view.width / 2.0) / std::tan(view.fov_deg * kDeg / 2.0);
  const double cx = view.width / 2.0, cy = view.height / 2.0;
  const double yaw0 = view.heading_deg * kDeg, pitch0 = view.pitch_deg * kDeg;
  const double cp = std::cos(pitch0), sp = std::sin(pitch0);
  const double px_per_rad_x = pano.width / (2.0 * std::numbers::pi);
  const double px_per_rad_y = pano.height / std::numbers::pi;

  Image out(view.width, view.height, pano.channels);
  std::vector<double> sample(static_cast<std::size_t>(pano.channels));
  for (int v = 0; v < view.height; ++v) {
    const double dy = (v + 0.5) - cy;  // down
    for (int u = 0; u < view.width; ++u) {
      const double dx = (u + 0.5) - cx;  // right
      // Camera ray (right, up, forward), pitched about the right axis.
      const double rx = dx, ry = -dy, rz = focal;
      const double fy = ry * cp + rz * sp;
      const double fz = -ry * sp + rz * cp;
      const double yaw = yaw0 + std::atan2(rx, fz);
      const double pitch = std::atan2(fy, std::hypot(rx, fz));
      const double x = yaw * px_per_rad_x - 0.5;
      const double y = (std::numbers::pi / 2.0 - pitch) * px_per_rad_y - 0.5;
      sample_equirect(pano, x, y, sample.data());
      for (int c = 0; c < pano.channels; ++c)
        out.at(u, v, c) = static_cast<std::uint8_t>(std::clamp(std::lround(sample[static_cast<std::size_t>(c)]), 0L, 255L));
    }
  }
  return out;
}

inline Image reproject_panorama(const Image& pano, double heading_deg, double fov_deg) {
  ViewSpec view;
  view.heading_deg = heading_deg;
  view.fov_deg = fov_deg;
  return reproject_panorama(pano, view);
}

struct ProjectedView {
  double heading_deg = 0.0;
  Image image;
};

/// Forward views for one panorama: a single view when `stereo_offset_deg`
/// is 0, otherwise the pair heading - offset and heading + offset.
inline std::vector<ProjectedView> binocular_views(const Image& pano, double heading_deg, double fov_deg,
                                                  double stereo_offset_deg = 0.0) {
  std::vector<ProjectedView> views;
  if (stereo_offset_deg == 0.0) {
    views.push_back({heading_deg, reproject_panorama(pano, heading_deg, fov_deg)});
    return views;
  }
  for (double h : {heading_deg - stereo_offset_deg, heading_deg + stereo_offset_deg})
    views.push_back({h, reproject_panorama(pano, h, fov_deg)});
  return views;
}

}  // namespace roadcode
