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

#include <cstdlib>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>

#include "roadcode/imagery.hpp"
#include "support.hpp"

namespace roadcode {
namespace {

using testing::error_code_of;

constexpr double kMetresPerDegree = kEarthMeanRadiusM * std::numbers::pi / 180.0;

class FunctionTransport : public HttpTransport {
 public:
  explicit FunctionTransport(std::function<HttpResponse(const HttpRequest&)> f) : f_(std::move(f)) {}
  HttpResponse send(const HttpRequest& request) override {
    requests.push_back(request);
    return f_(request);
  }
  std::vector<HttpRequest> requests;

 private:
  std::function<HttpResponse(const HttpRequest&)> f_;
};

ImageryQuery query_at(double lat, double lon, const std::string& date) {
  ImageryQuery q;
  q.latitude = lat;
  q.longitude = lon;
  q.reference_time = *parse_timestamp(date);
  q.api_token_env = "ROADCODE_TEST_MAPILLARY_TOKEN";
  return q;
}

nlohmann::json record(const std::string& id, double lat, double lon, const std::string& when, bool pano = false) {
  return {{"id", id},
          {"geometry", {{"type", "Point"}, {"coordinates", {lon, lat}}}},
          {"captured_at", when},
          {"is_pano", pano},
          {"compass_angle", 0.0}};
}

std::shared_ptr<FunctionTransport> serving(nlohmann::json data, int status = 200) {
  return std::make_shared<FunctionTransport>([data, status](const HttpRequest&) {
    return HttpResponse{status, nlohmann::json{{"data", data}}.dump(), ""};
  });
}

struct TokenEnv {
  TokenEnv() { ::setenv("ROADCODE_TEST_MAPILLARY_TOKEN", "secret-token", 1); }
  ~TokenEnv() { ::unsetenv("ROADCODE_TEST_MAPILLARY_TOKEN"); }
};

TEST(Haversine, LatitudeOffsetIsArcLength) {
  EXPECT_DOUBLE_EQ(haversine_m(13.0, 100.0, 13.0, 100.0), 0.0);
  EXPECT_NEAR(haversine_m(13.0, 100.0, 14.0, 100.0), kMetresPerDegree, 1e-6);
  EXPECT_NEAR(kMetresPerDegree, 111195.08, 0.01);
  EXPECT_NEAR(haversine_m(0, 0, 0, 180), std::numbers::pi * kEarthMeanRadiusM, 1e-6);
  EXPECT_NEAR(haversine_m(10, 20, 11, 21), haversine_m(11, 21, 10, 20), 1e-9);
}

TEST(Imagery, RecordBeyondBufferIsDropped) {
  TokenEnv env;
  const double lat = 13.7563, lon = 100.5018;
  auto at = [&](double metres) { return lat + metres / kMetresPerDegree; };
  auto transport = serving({record("a", at(0), lon, "2024-05-01"), record("b", at(10), lon, "2024-05-01"),
                            record("c", at(30), lon, "2024-05-01"), record("d", at(80), lon, "2024-05-01"),
                            record("e", at(49), lon, "2024-05-01")});
  MapillaryClient client(transport);
  auto found = client.query_images(query_at(lat, lon, "2024-06-01"));
  ASSERT_EQ(found.size(), 4u);
  EXPECT_EQ(found[0].provider_id, "a");
  EXPECT_EQ(found[1].provider_id, "b");
  EXPECT_EQ(found[2].provider_id, "c");
  EXPECT_EQ(found[3].provider_id, "e");
  EXPECT_NEAR(found[3].distance_m, 49.0, 1e-6);
}

TEST(Imagery, RecencyWindowIsSymmetric) {
  TokenEnv env;
  auto transport = serving({record("old", 13.0, 100.0, "2023-05-01"), record("recent", 13.0, 100.0, "2024-01-01"),
                            record("after", 13.0, 100.0, "2024-12-01"), record("late", 13.0, 100.0, "2025-07-01")});
  auto found = MapillaryClient(transport).query_images(query_at(13.0, 100.0, "2024-06-01"));
  ASSERT_EQ(found.size(), 2u);
  EXPECT_EQ(found[0].provider_id, "after");  // equal distance: id order
  EXPECT_EQ(found[1].provider_id, "recent");
}

TEST(Imagery, TokenTravelsInAuthorizationHeader) {
  TokenEnv env;
  auto transport = serving(nlohmann::json::array());
  MapillaryClient(transport).query_images(query_at(13.0, 100.0, "2024-06-01"));
  ASSERT_EQ(transport->requests.size(), 1u);
  const auto& headers = transport->requests[0].headers;
  ASSERT_EQ(headers.size(), 1u);
  EXPECT_EQ(headers[0].first, "Authorization");
  EXPECT_EQ(headers[0].second, "OAuth secret-token");
  EXPECT_EQ(transport->requests[0].url.find("secret-token"), std::string::npos);
}

TEST(Imagery, ProviderErrorsMapToCodes) {
  TokenEnv env;
  auto q = query_at(13.0, 100.0, "2024-06-01");
  EXPECT_EQ(error_code_of([&] { MapillaryClient(serving({}, 429)).query_images(q); }), ErrorCode::QuotaExceeded);
  EXPECT_EQ(error_code_of([&] { MapillaryClient(serving({}, 401)).query_images(q); }), ErrorCode::AuthError);
  EXPECT_EQ(error_code_of([&] { MapillaryClient(serving({}, 500)).query_images(q); }), ErrorCode::TransportError);
  auto garbage = std::make_shared<FunctionTransport>([](const HttpRequest&) { return HttpResponse{200, "nope", ""}; });
  EXPECT_EQ(error_code_of([&] { MapillaryClient(garbage).query_images(q); }), ErrorCode::TransportError);
}

TEST(Imagery, MissingTokenIsAuthError) {
  ::unsetenv("ROADCODE_TEST_MAPILLARY_TOKEN");
  auto transport = serving(nlohmann::json::array());
  EXPECT_EQ(error_code_of([&] { MapillaryClient(transport).query_images(query_at(13.0, 100.0, "2024-06-01")); }),
            ErrorCode::AuthError);
  EXPECT_TRUE(transport->requests.empty());
}

TEST(Imagery, MalformedRecordsAreSkipped) {
  TokenEnv env;
  nlohmann::json data = {record("ok", 13.0, 100.0, "2024-05-01"), {{"id", "no_geometry"}},
                         record("bad_date", 13.0, 100.0, "yesterday")};
  data.push_back({{"id", 42}, {"geometry", {{"coordinates", {100.0, 13.0}}}}, {"captured_at", 1714521600000LL}});
  auto found = MapillaryClient(serving(data)).query_images(query_at(13.0, 100.0, "2024-06-01"));
  ASSERT_EQ(found.size(), 2u);
  EXPECT_EQ(found[0].provider_id, "42");
  EXPECT_EQ(found[1].provider_id, "ok");
}

TEST(Imagery, QueryValidation) {
  auto q = query_at(13.0, 100.0, "2024-06-01");
  q.buffer_m = 0;
  EXPECT_EQ(error_code_of([&] { q.validate(); }), ErrorCode::InvalidConfiguration);
  q = query_at(95.0, 100.0, "2024-06-01");
  EXPECT_EQ(error_code_of([&] { q.validate(); }), ErrorCode::InvalidConfiguration);
  q = query_at(13.0, 100.0, "2024-06-01");
  q.max_age_days = 0;
  EXPECT_EQ(error_code_of([&] { q.validate(); }), ErrorCode::InvalidConfiguration);
}

TEST(Imagery, ReplayFixtureServesThreeSortedCandidates) {
  auto transport = std::make_shared<ReplayTransport>(testing::fixture("mapillary/replay.jsonl"));
  MapillaryClient client(transport, "https://graph.mapillary.com", false);
  auto q = query_at(13.7563, 100.5018, "2024-06-01");
  auto found = client.query_images(q);
  ASSERT_EQ(found.size(), 3u);
  EXPECT_EQ(found[0].provider_id, "1001");
  EXPECT_EQ(found[1].provider_id, "1002");
  EXPECT_EQ(found[2].provider_id, "1003");
  EXPECT_TRUE(found[0].is_panorama);
  for (std::size_t i = 1; i < found.size(); ++i) EXPECT_LE(found[i - 1].distance_m, found[i].distance_m);
  EXPECT_TRUE(client.download(found[0]).has_value());
  EXPECT_FALSE(client.download(found[2]).has_value());  // not recorded
}

TEST(Imagery, SearchUrlMatchesRecordedRequest) {
  std::ifstream in(testing::fixture("mapillary/replay.jsonl"));
  std::string first;
  std::getline(in, first);
  MapillaryClient client(serving(nlohmann::json::array()));
  EXPECT_EQ(client.search_url(query_at(13.7563, 100.5018, "2024-06-01")),
            nlohmann::json::parse(first)["request"]["url"].get<std::string>());
}

TEST(Imagery, RecorderOmitsHeadersAndReplays) {
  testing::TempDir dir("recorder");
  TokenEnv env;
  auto inner = serving({record("r1", 13.0, 100.0, "2024-05-01")});
  auto recorder = std::make_shared<RecordingTransport>(inner, dir / "rec.jsonl");
  auto q = query_at(13.0, 100.0, "2024-06-01");
  auto live = MapillaryClient(recorder).query_images(q);
  const auto text = util::read_file(dir / "rec.jsonl");
  EXPECT_EQ(text.find("secret-token"), std::string::npos);
  EXPECT_EQ(text.find("Authorization"), std::string::npos);
  auto replayed = MapillaryClient(std::make_shared<ReplayTransport>(dir / "rec.jsonl")).query_images(q);
  EXPECT_EQ(live, replayed);
}

TEST(Imagery, PropertyFilterIsConjunctionOfDistanceAndAge) {
  TokenEnv env;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> offset(-0.001, 0.001);
  std::uniform_int_distribution<int> day(-500, 500);
  for (int trial = 0; trial < 50; ++trial) {
    auto q = query_at(13.5, 100.5, "2024-06-01");
    q.buffer_m = 20 + trial * 2.0;
    q.max_age_days = 30 + trial * 10;
    nlohmann::json data = nlohmann::json::array();
    std::set<std::string> expected;
    for (int i = 0; i < 30; ++i) {
      const double lat = q.latitude + offset(rng), lon = q.longitude + offset(rng);
      const int d = day(rng);
      const auto when = q.reference_time + std::chrono::days(d);
      const std::string id = "p" + std::to_string(i);
      data.push_back({{"id", id},
                      {"geometry", {{"coordinates", {lon, lat}}}},
                      {"captured_at", std::chrono::duration_cast<std::chrono::milliseconds>(when.time_since_epoch()).count()}});
      if (haversine_m(q.latitude, q.longitude, lat, lon) <= q.buffer_m && std::abs(d) <= q.max_age_days)
        expected.insert(id);
    }
    auto found = MapillaryClient(serving(data)).query_images(q);
    std::set<std::string> got;
    for (const auto& c : found) got.insert(c.provider_id);
    ASSERT_EQ(got, expected) << trial;
    for (std::size_t i = 1; i < found.size(); ++i) ASSERT_LE(found[i - 1].distance_m, found[i].distance_m);
  }
}

}  // namespace
}  // namespace roadcode
