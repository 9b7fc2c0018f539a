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
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "roadcode/error.hpp"
#include "roadcode/http.hpp"
#include "roadcode/timestamp.hpp"

namespace roadcode {

inline constexpr double kEarthMeanRadiusM = 6371008.8;

/// Great-circle distance in metres on a sphere of the WGS84 mean radius.
inline double haversine_m(double lat1, double lon1, double lat2, double lon2) {
  constexpr double kDeg = std::numbers::pi / 180.0;
  const double dlat = (lat2 - lat1) * kDeg, dlon = (lon2 - lon1) * kDeg;
  const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1 * kDeg) * std::cos(lat2 * kDeg) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthMeanRadiusM * std::asin(std::min(1.0, std::sqrt(a)));
}

struct ImageryQuery {
  double latitude = 0.0;
  double longitude = 0.0;
  double buffer_m = 50.0;
  int max_age_days = 365;
  std::string api_token_env = "MAPILLARY_TOKEN";
  // Survey date the recency window is centred on.
  Timestamp reference_time{};

  void validate() const {
    if (!(buffer_m > 0)) fail(ErrorCode::InvalidConfiguration, "buffer_m must be > 0");
    if (max_age_days <= 0) fail(ErrorCode::InvalidConfiguration, "max_age_days must be > 0");
    if (latitude < -90 || latitude > 90 || longitude < -180 || longitude > 180)
      fail(ErrorCode::InvalidConfiguration, "query point outside WGS84 range");
  }
};

struct CandidateImage {
  std::string provider_id;
  double latitude = 0.0;
  double longitude = 0.0;
  Timestamp captured_at{};
  bool is_panorama = false;
  double distance_m = 0.0;
  double compass_angle = 0.0;
  std::string download_url;

  bool operator==(const CandidateImage&) const = default;
};

/// Distance and recency filter shared by live queries and tests. Recency is
/// |captured - reference| <= max_age_days.
inline bool passes_filters(const ImageryQuery& q, const CandidateImage& c) {
  using namespace std::chrono;
  const auto age = c.captured_at > q.reference_time ? c.captured_at - q.reference_time : q.reference_time - c.captured_at;
  return c.distance_m <= q.buffer_m && age <= days(q.max_age_days);
}

/// Mapillary Graph API v4 image search. Token comes from the environment
/// variable named in the query and travels in the Authorization header.
class MapillaryClient {
 public:
  explicit MapillaryClient(std::shared_ptr<HttpTransport> transport,
                           std::string base_url = "https://graph.mapillary.com", bool require_token = true)
      : transport_(std::move(transport)), base_url_(std::move(base_url)), require_token_(require_token) {}

  /// Bounding box of the buffer, padded by 10% so the haversine filter is
  /// the only thing that decides membership.
  std::string search_url(const ImageryQuery& q) const {
    constexpr double kDeg = std::numbers::pi / 180.0;
    const double pad = q.buffer_m * 1.1;
    const double dlat = pad / (kEarthMeanRadiusM * kDeg);
    const double dlon = dlat / std::max(1e-6, std::cos(q.latitude * kDeg));
    char bbox[160];
    std::snprintf(bbox, sizeof bbox, "%.7f,%.7f,%.7f,%.7f", q.longitude - dlon, q.latitude - dlat, q.longitude + dlon,
                  q.latitude + dlat);
    return base_url_ + "/images?fields=id,geometry,captured_at,is_pano,compass_angle,thumb_original_url&bbox=" + bbox +
           "&limit=2000";
  }

  std::vector<CandidateImage> query_images(const ImageryQuery& q) const {
    q.validate();
    HttpRequest req;
    req.method = "GET";
    req.url = search_url(q);
    const char* token = q.api_token_env.empty() ? nullptr : std::getenv(q.api_token_env.c_str());
    if (token && *token)
      req.headers.emplace_back("Authorization", std::string("OAuth ") + token);
    else if (require_token_)
      fail(ErrorCode::AuthError, "environment variable " + q.api_token_env + " is not set");

    auto res = transport_->send(req);
    if (res.status == 401 || res.status == 403) fail(ErrorCode::AuthError, "imagery provider rejected the token");
    if (res.status == 429) fail(ErrorCode::QuotaExceeded, "imagery provider quota exceeded");
    if (res.status != 200)
      fail(ErrorCode::TransportError, "imagery query failed: HTTP " + std::to_string(res.status) + " " + res.error);

    auto j = nlohmann::json::parse(res.body, nullptr, false);
    if (j.is_discarded() || !j.contains("data") || !j["data"].is_array())
      fail(ErrorCode::TransportError, "imagery response has no data array");

    std::vector<CandidateImage> out;
    for (const auto& item : j["data"]) {
      try {
        CandidateImage c;
        c.provider_id = item.at("id").is_string() ? item["id"].get<std::string>() : item["id"].dump();
        const auto& coords = item.at("geometry").at("coordinates");
        c.longitude = coords.at(0).get<double>();
        c.latitude = coords.at(1).get<double>();
        const auto& when = item.at("captured_at");
        if (when.is_number()) {
          c.captured_at = from_epoch_millis(when.get<long long>());
        } else {
          auto t = parse_timestamp(when.get<std::string>());
          if (!t) continue;
          c.captured_at = *t;
        }
        c.is_panorama = item.value("is_pano", false);
        c.compass_angle = item.value("compass_angle", 0.0);
        c.download_url = item.value("thumb_original_url", std::string());
        c.distance_m = haversine_m(q.latitude, q.longitude, c.latitude, c.longitude);
        if (passes_filters(q, c)) out.push_back(std::move(c));
      } catch (const nlohmann::json::exception&) {
        continue;  // malformed record
      }
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
      return a.distance_m != b.distance_m ? a.distance_m < b.distance_m : a.provider_id < b.provider_id;
    });
    return out;
  }

  /// Raw image bytes, or nullopt on any failure.
  std::optional<std::string> download(const CandidateImage& c) const {
    if (c.download_url.empty()) return std::nullopt;
    HttpRequest req;
    req.url = c.download_url;
    auto res = transport_->send(req);
    if (res.status != 200) return std::nullopt;
    return res.body;
  }

 private:
  std::shared_ptr<HttpTransport> transport_;
  std::string base_url_;
  bool require_token_;
};

}  // namespace roadcode
