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

#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "roadcode/error.hpp"
#include "roadcode/image.hpp"
#include "roadcode/util.hpp"

namespace roadcode {

namespace detail {

inline Image from_mat(const cv::Mat& decoded, const std::string& what) {
  if (decoded.empty()) fail(ErrorCode::UnsupportedPixelFormat, "cannot decode " + what);
  cv::Mat m = decoded;
  if (m.depth() != CV_8U) m.convertTo(m, CV_8U);
  if (m.channels() == 3) cv::cvtColor(m, m, cv::COLOR_BGR2RGB);
  else if (m.channels() == 4) cv::cvtColor(m, m, cv::COLOR_BGRA2RGBA);
  if (!m.isContinuous()) m = m.clone();
  Image img(m.cols, m.rows, m.channels());
  std::copy(m.datastart, m.dataend, img.pixels.begin());
  require_supported_format(img);
  return img;
}

}  // namespace detail

inline Image read_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::FileNotFound, path.string());
  return detail::from_mat(cv::imread(path.string(), cv::IMREAD_UNCHANGED), path.string());
}

inline Image decode_image(const std::string& bytes, const std::string& what = "image bytes") {
  std::vector<unsigned char> buf(bytes.begin(), bytes.end());
  return detail::from_mat(cv::imdecode(buf, cv::IMREAD_UNCHANGED), what);
}

inline std::vector<unsigned char> encode_png(const Image& image) {
  require_supported_format(image);
  const int type = image.channels == 1 ? CV_8UC1 : image.channels == 3 ? CV_8UC3 : CV_8UC4;
  cv::Mat m(image.height, image.width, type, const_cast<std::uint8_t*>(image.pixels.data()));
  cv::Mat bgr;
  if (image.channels == 3) cv::cvtColor(m, bgr, cv::COLOR_RGB2BGR);
  else if (image.channels == 4) cv::cvtColor(m, bgr, cv::COLOR_RGBA2BGRA);
  else bgr = m;
  std::vector<unsigned char> out;
  if (!cv::imencode(".png", bgr, out)) fail(ErrorCode::UnsupportedPixelFormat, "PNG encoding failed");
  return out;
}

inline void write_png(const std::filesystem::path& path, const Image& image) {
  auto bytes = encode_png(image);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  util::write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

}  // namespace roadcode
