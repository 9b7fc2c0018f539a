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
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "roadcode/codebook.hpp"
#include "roadcode/dataset.hpp"
#include "roadcode/error.hpp"
#include "roadcode/util.hpp"
#include "roadcode/vlm_client.hpp"

namespace roadcode {

struct RoadPrediction {
  std::string segment_id;
  std::map<std::string, std::string> aggregated;    // attribute -> winning code
  std::map<std::string, std::string> contributing;  // attribute -> image that supplied it
  std::vector<std::string> unresolved;              // invalid in every image
  int n_images = 0;

  bool operator==(const RoadPrediction&) const = default;
};

/// Highest-risk aggregation of image-level predictions to one road
/// segment. Ties (same code, by the total order on ranks) go to the image
/// earliest in the segment's order.
inline RoadPrediction aggregate_segment(const std::vector<ParsedPredictions>& image_predictions,
                                        const SegmentRecord& segment, const Codebook& codebook) {
  if (image_predictions.empty() || image_predictions.size() > static_cast<std::size_t>(kMaxImagesPerSegment))
    fail(ErrorCode::SegmentImageMismatch, "segment " + segment.segment_id + " has " +
                                              std::to_string(image_predictions.size()) + " image predictions");
  if (image_predictions.size() != segment.image_ids.size())
    fail(ErrorCode::SegmentImageMismatch, "segment " + segment.segment_id + " lists " +
                                              std::to_string(segment.image_ids.size()) + " images, got predictions for " +
                                              std::to_string(image_predictions.size()));

  // Rank of each prediction's image within the segment.
  std::vector<std::pair<std::size_t, const ParsedPredictions*>> ordered;
  for (const auto& p : image_predictions) {
    auto it = std::find(segment.image_ids.begin(), segment.image_ids.end(), p.image_id);
    if (it == segment.image_ids.end())
      fail(ErrorCode::SegmentImageMismatch, "image " + p.image_id + " does not belong to segment " + segment.segment_id);
    ordered.emplace_back(static_cast<std::size_t>(it - segment.image_ids.begin()), &p);
  }
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 1; i < ordered.size(); ++i)
    if (ordered[i].first == ordered[i - 1].first)
      fail(ErrorCode::SegmentImageMismatch, "image " + ordered[i].second->image_id + " predicted twice");

  RoadPrediction road;
  road.segment_id = segment.segment_id;
  road.n_images = static_cast<int>(ordered.size());
  for (const auto& attr : codebook.attributes) {
    const std::string* best_code = nullptr;
    const std::string* best_image = nullptr;
    int best_rank = -1;
    for (const auto& [_, p] : ordered) {
      auto it = p->predictions.find(attr.id);
      if (it == p->predictions.end()) continue;
      const int rank = attr.risk_rank(it->second);
      if (rank > best_rank) {
        best_rank = rank;
        best_code = &it->second;
        best_image = &p->image_id;
      }
    }
    if (best_code) {
      road.aggregated[attr.id] = *best_code;
      road.contributing[attr.id] = *best_image;
    } else {
      road.unresolved.push_back(attr.id);
    }
  }
  return road;
}

inline nlohmann::ordered_json to_json(const RoadPrediction& r) {
  nlohmann::ordered_json j;
  j["segment_id"] = r.segment_id;
  j["n_images"] = r.n_images;
  nlohmann::ordered_json agg = nlohmann::ordered_json::object(), con = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.aggregated) agg[k] = v;
  for (const auto& [k, v] : r.contributing) con[k] = v;
  j["aggregated"] = std::move(agg);
  j["contributing"] = std::move(con);
  j["unresolved"] = r.unresolved;
  return j;
}

inline RoadPrediction road_from_json(const nlohmann::json& j) {
  RoadPrediction r;
  try {
    r.segment_id = j.at("segment_id").get<std::string>();
    r.n_images = j.at("n_images").get<int>();
    r.aggregated = j.at("aggregated").get<std::map<std::string, std::string>>();
    r.contributing = j.value("contributing", std::map<std::string, std::string>{});
    r.unresolved = j.value("unresolved", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::SchemaViolation, std::string("road prediction: ") + e.what());
  }
  return r;
}

// ---------------------------------------------------------------------------
// Reference star-rating model. This is a configuration-driven stand-in, not
// the iRAP Star Rating Score: score = sum over configured attributes of
// weight * risk_factor(class) * speed_multiplier(operating speed).

enum class RoadUser { VehicleOccupant, Motorcyclist, Pedestrian, Bicyclist };

constexpr std::string_view road_user_name(RoadUser u) noexcept {
  switch (u) {
    case RoadUser::VehicleOccupant: return "vehicle_occupant";
    case RoadUser::Motorcyclist: return "motorcyclist";
    case RoadUser::Pedestrian: return "pedestrian";
    case RoadUser::Bicyclist: return "bicyclist";
  }
  return "";
}

inline std::optional<RoadUser> parse_road_user(std::string_view s) {
  auto n = util::to_lower(s);
  for (auto u : {RoadUser::VehicleOccupant, RoadUser::Motorcyclist, RoadUser::Pedestrian, RoadUser::Bicyclist})
    if (road_user_name(u) == n) return u;
  if (n == "vehicleoccupant" || n == "car_occupant") return RoadUser::VehicleOccupant;
  return std::nullopt;
}

struct SpeedBand {
  double max_kmh = 0.0;
  double multiplier = 1.0;
};

struct ScoringConfig {
  RoadUser road_user = RoadUser::Motorcyclist;
  std::map<std::string, double> weights;
  std::map<std::string, std::map<std::string, double>> risk_factors;
  std::vector<SpeedBand> speed_bands;      // ascending max_kmh
  std::array<double, 4> star_thresholds{};  // t5 < t4 < t3 < t2
  // Attributes unresolved in every image fall back to their safest class
  // (logged) instead of failing.
  bool impute_unresolved = true;
  std::string digest;

  double speed_multiplier(double kmh) const {
    for (const auto& b : speed_bands)
      if (kmh <= b.max_kmh) return b.multiplier;
    return speed_bands.back().multiplier;  // above the last band
  }

  int stars_for(double score) const {
    for (int i = 0; i < 4; ++i)
      if (score < star_thresholds[static_cast<std::size_t>(i)]) return 5 - i;
    return 1;
  }
};

/// Parses and validates a scoring configuration against the codebook.
/// Risk factors must be non-negative and non-decreasing in risk rank and
/// weights non-negative, which makes the star rating monotone in risk.
inline ScoringConfig parse_scoring_config(std::string_view text, const Codebook& codebook,
                                          const std::string& source = "<scoring>") {
  auto bad = [&](const std::string& m) { fail(ErrorCode::InvalidConfiguration, source + ": " + m); };
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) bad("not a JSON object");
  for (const auto& [k, _] : j.items())
    if (k != "road_user" && k != "weights" && k != "risk_factors" && k != "speed_bands" && k != "star_thresholds" &&
        k != "impute_unresolved")
      bad("unknown key '" + k + "'");
  for (const char* k : {"road_user", "weights", "risk_factors", "speed_bands", "star_thresholds"})
    if (!j.contains(k)) bad(std::string("missing key '") + k + "'");

  ScoringConfig cfg;
  try {
    auto user = parse_road_user(j["road_user"].get<std::string>());
    if (!user) bad("unknown road_user '" + j["road_user"].get<std::string>() + "'");
    cfg.road_user = *user;
    if (j.contains("impute_unresolved")) cfg.impute_unresolved = j["impute_unresolved"].get<bool>();

    for (const auto& [attr_id, w] : j["weights"].items()) {
      const auto* attr = codebook.find(attr_id);
      if (!attr) bad("weight for unknown attribute '" + attr_id + "'");
      const double weight = w.get<double>();
      if (weight < 0) bad("negative weight for '" + attr_id + "'");
      cfg.weights[attr_id] = weight;
      if (!j["risk_factors"].contains(attr_id)) bad("no risk_factors for weighted attribute '" + attr_id + "'");
      std::vector<std::pair<int, double>> by_rank;
      for (const auto& c : attr->classes) {
        if (!j["risk_factors"][attr_id].contains(c.code))
          bad("risk_factors['" + attr_id + "'] lacks class '" + c.code + "'");
        const double f = j["risk_factors"][attr_id][c.code].get<double>();
        if (f < 0) bad("negative risk factor for '" + attr_id + "'/'" + c.code + "'");
        cfg.risk_factors[attr_id][c.code] = f;
        by_rank.emplace_back(c.risk_rank, f);
      }
      std::sort(by_rank.begin(), by_rank.end());
      for (std::size_t i = 1; i < by_rank.size(); ++i)
        if (by_rank[i].second < by_rank[i - 1].second)
          bad("risk factors of '" + attr_id + "' decrease with increasing risk rank");
      for (const auto& [code, _] : j["risk_factors"][attr_id].items())
        if (!attr->has_code(code)) bad("risk_factors['" + attr_id + "'] names unknown class '" + code + "'");
    }
    for (const auto& [attr_id, _] : j["risk_factors"].items())
      if (!cfg.weights.count(attr_id)) bad("risk_factors for unweighted attribute '" + attr_id + "'");

    for (const auto& b : j["speed_bands"]) {
      SpeedBand band{b.at("max_kmh").get<double>(), b.at("multiplier").get<double>()};
      if (band.multiplier < 0) bad("negative speed multiplier");
      if (!cfg.speed_bands.empty() && band.max_kmh <= cfg.speed_bands.back().max_kmh)
        bad("speed_bands must have strictly increasing max_kmh");
      cfg.speed_bands.push_back(band);
    }
    if (cfg.speed_bands.empty()) bad("speed_bands is empty");

    const auto& t = j["star_thresholds"];
    if (!t.is_array() || t.size() != 4) bad("star_thresholds must list exactly four values [t5, t4, t3, t2]");
    for (std::size_t i = 0; i < 4; ++i) cfg.star_thresholds[i] = t[i].get<double>();
    if (!(cfg.star_thresholds[0] > 0)) bad("t5 must be positive");
    for (std::size_t i = 1; i < 4; ++i)
      if (!(cfg.star_thresholds[i] > cfg.star_thresholds[i - 1])) bad("star_thresholds must be strictly increasing");
  } catch (const nlohmann::json::exception& e) {
    bad(e.what());
  }
  cfg.digest = sha256_hex(text).substr(0, 16);
  return cfg;
}

inline ScoringConfig load_scoring_config(const std::filesystem::path& path, const Codebook& codebook) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::FileNotFound, path.string());
  return parse_scoring_config(util::read_file(path), codebook, path.string());
}

struct StarRatingInput {
  RoadPrediction road;
  double aadt = 0.0;             // vehicles/day
  double operating_speed = 0.0;  // km/h
  RoadUser road_user = RoadUser::Motorcyclist;
};

inline constexpr std::string_view kReferenceModelVersion = "reference-linear-v1 (not the iRAP model)";

struct StarRating {
  int stars = 1;
  double score = 0.0;
  std::string model_version;
  std::vector<std::string> imputed;  // attributes scored at their safest class
};

/// AADT is validated and carried for reporting; the reference model does not
/// weight it.
inline StarRating estimate_star_rating(const StarRatingInput& input, const ScoringConfig& model,
                                       const Codebook& codebook) {
  if (input.aadt < 0) fail(ErrorCode::InvalidConfiguration, "aadt must be >= 0");
  if (!(input.operating_speed > 0)) fail(ErrorCode::InvalidConfiguration, "operating_speed must be > 0");
  if (input.road_user != model.road_user)
    fail(ErrorCode::InvalidConfiguration, "scoring configuration is for " + std::string(road_user_name(model.road_user)) +
                                              ", input asks for " + std::string(road_user_name(input.road_user)));
  StarRating out;
  out.model_version = std::string(kReferenceModelVersion) + " cfg " + model.digest;
  double sum = 0.0;
  for (const auto& [attr_id, weight] : model.weights) {
    std::string code;
    if (auto it = input.road.aggregated.find(attr_id); it != input.road.aggregated.end()) {
      code = it->second;
    } else if (model.impute_unresolved &&
               std::find(input.road.unresolved.begin(), input.road.unresolved.end(), attr_id) !=
                   input.road.unresolved.end()) {
      code = codebook.at(attr_id).safest().code;
      out.imputed.push_back(attr_id);
      spdlog::warn("segment {}: attribute {} unresolved, scored at safest class {}", input.road.segment_id, attr_id, code);
    } else {
      fail(ErrorCode::MissingAttribute, "segment " + input.road.segment_id + " has no value for '" + attr_id + "'");
    }
    const auto& factors = model.risk_factors.at(attr_id);
    auto f = factors.find(code);
    if (f == factors.end()) fail(ErrorCode::UnknownClassCode, "attribute '" + attr_id + "' has no class '" + code + "'");
    sum += weight * f->second;
  }
  out.score = sum * model.speed_multiplier(input.operating_speed);
  out.stars = model.stars_for(out.score);
  return out;
}

struct StarConfusion {
  std::array<std::array<long, 5>, 5> counts{};  // [truth-1][predicted-1]
  // Rows truth {<3, >=3}, columns predicted {<3, >=3}.
  std::array<std::array<long, 2>, 2> high_risk{};

  long total() const {
    long n = 0;
    for (const auto& r : counts)
      for (auto c : r) n += c;
    return n;
  }
};

inline StarConfusion star_rating_confusion(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size())
    fail(ErrorCode::LengthMismatch, std::to_string(predicted.size()) + " predictions vs " +
                                        std::to_string(truth.size()) + " truths");
  StarConfusion m;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const int p = predicted[i], t = truth[i];
    if (p < 1 || p > 5 || t < 1 || t > 5)
      fail(ErrorCode::InvalidConfiguration, "star value out of 1..5 at position " + std::to_string(i));
    ++m.counts[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(p - 1)];
    ++m.high_risk[t < 3 ? 0 : 1][p < 3 ? 0 : 1];
  }
  return m;
}

inline StarConfusion star_rating_confusion(const std::vector<StarRating>& predicted, const std::vector<int>& truth) {
  std::vector<int> stars;
  stars.reserve(predicted.size());
  for (const auto& p : predicted) stars.push_back(p.stars);
  return star_rating_confusion(stars, truth);
}

/// Rows: truth stars 1..5; columns: predicted stars 1..5.
inline std::string star_confusion_csv(const StarConfusion& m) {
  std::string out = "truth\\predicted,1,2,3,4,5\n";
  for (int t = 0; t < 5; ++t) {
    out += std::to_string(t + 1);
    for (int p = 0; p < 5; ++p) out += "," + std::to_string(m.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)]);
    out += "\n";
  }
  return out;
}

/// High-risk summary: stars below 3 versus 3 and above.
inline std::string star_high_risk_csv(const StarConfusion& m) {
  const auto& h = m.high_risk;
  const long tp = h[0][0], fn = h[0][1], fp = h[1][0];
  auto ratio = [](long a, long b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "truth\\predicted,below_3,3_or_more\nbelow_3,%ld,%ld\n3_or_more,%ld,%ld\n"
                "high_risk_precision,%.4f\nhigh_risk_recall,%.4f\n",
                h[0][0], h[0][1], h[1][0], h[1][1], ratio(tp, tp + fp), ratio(tp, tp + fn));
  return buf;
}

}  // namespace roadcode
