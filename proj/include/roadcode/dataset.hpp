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
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "roadcode/augment.hpp"
#include "roadcode/codebook.hpp"
#include "roadcode/csv.hpp"
#include "roadcode/error.hpp"
#include "roadcode/rng.hpp"
#include "roadcode/timestamp.hpp"
#include "roadcode/util.hpp"

namespace roadcode {

inline constexpr int kNativeImageWidth = 1600;
inline constexpr int kNativeImageHeight = 1200;
inline constexpr int kMaxImagesPerSegment = 4;

struct ImageRecord {
  std::string image_id;
  std::string segment_id;
  int order_in_segment = 1;  // 1..4
  std::filesystem::path path;
  double latitude = 0.0;
  double longitude = 0.0;
  std::optional<Timestamp> captured_at;
  int width = kNativeImageWidth;
  int height = kNativeImageHeight;
};

struct SegmentRecord {
  std::string segment_id;
  std::vector<std::string> image_ids;  // ordered by order_in_segment
  // One code per attribute; multi-labelled cells are reduced to their
  // highest-risk code on load.
  std::map<std::string, std::string> ground_truth;
  std::optional<double> aadt;             // vehicles/day
  std::optional<double> operating_speed;  // km/h
};

struct Dataset {
  std::vector<ImageRecord> images;
  std::vector<SegmentRecord> segments;
  std::vector<std::string> warnings;

  const ImageRecord* find_image(std::string_view id) const {
    for (const auto& i : images)
      if (i.image_id == id) return &i;
    return nullptr;
  }
  const SegmentRecord* find_segment(std::string_view id) const {
    for (const auto& s : segments)
      if (s.segment_id == id) return &s;
    return nullptr;
  }
};

struct DatasetLoadOptions {
  bool allow_missing_images = false;
  // Defaults to segments.csv next to the manifest, when present.
  std::optional<std::filesystem::path> segments_csv;
  char multi_label_separator = '|';
};

inline const std::vector<std::string>& manifest_base_columns() {
  static const std::vector<std::string> cols = {"image_id",  "segment_id", "order_in_segment", "relative_path",
                                                "latitude", "longitude",  "captured_at"};
  return cols;
}

namespace detail {

inline std::optional<double> parse_double(std::string_view text) {
  std::string s = util::trim(text);
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<int> parse_int(std::string_view text) {
  std::string s = util::trim(text);
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

/// Reduces "a|b" to the code with the highest risk rank.
inline std::string reduce_to_highest_risk(const AttributeDefinition& attr, const std::vector<std::string>& codes) {
  return *std::max_element(codes.begin(), codes.end(), [&](const std::string& a, const std::string& b) {
    return attr.risk_rank(a) < attr.risk_rank(b);
  });
}

}  // namespace detail

/// Loads the image manifest (and segments.csv when available), validating
/// every cross-reference and ground-truth code against the codebook.
inline Dataset load_dataset(const std::filesystem::path& manifest, const std::filesystem::path& image_root,
                            const Codebook& codebook, const DatasetLoadOptions& options = {}) {
  Dataset data;
  const std::string source = manifest.string();
  if (!std::filesystem::exists(manifest)) fail(ErrorCode::FileNotFound, source);
  auto rows = csv::parse(util::read_file(manifest), source);
  if (rows.empty()) {
    data.warnings.push_back(source + ": empty manifest");
    return data;
  }

  const auto& header = rows.front().fields;
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    auto name = util::trim(header[i]);
    if (!col.emplace(name, i).second) fail(ErrorCode::ManifestParseError, source + ": duplicate column '" + name + "'");
  }
  for (const auto& required : manifest_base_columns())
    if (!col.count(required)) fail(ErrorCode::ManifestParseError, source + ": missing column '" + required + "'");

  std::vector<std::pair<std::size_t, const AttributeDefinition*>> gt_columns;
  for (const auto& [name, index] : col) {
    if (name.rfind("gt_", 0) == 0) {
      const auto* attr = codebook.find(name.substr(3));
      if (!attr) fail(ErrorCode::ManifestParseError, source + ": column '" + name + "' names no codebook attribute");
      gt_columns.emplace_back(index, attr);
      continue;
    }
    const bool known = std::find(manifest_base_columns().begin(), manifest_base_columns().end(), name) !=
                           manifest_base_columns().end() ||
                       name == "width" || name == "height";
    if (!known) fail(ErrorCode::ManifestParseError, source + ": unknown column '" + name + "'");
  }

  if (rows.size() == 1) data.warnings.push_back(source + ": manifest has a header but no rows");

  std::map<std::string, std::size_t> segment_index;
  std::map<std::string, std::map<int, std::string>> segment_orders;
  std::map<std::string, std::map<std::string, std::vector<std::string>>> segment_codes;
  std::set<std::string> image_ids;

  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::string where = source + ":" + std::to_string(row.line);
    if (row.fields.size() != header.size())
      fail(ErrorCode::ManifestParseError, where + ": expected " + std::to_string(header.size()) + " fields, got " +
                                              std::to_string(row.fields.size()));
    auto field = [&](const std::string& name) { return util::trim(row.fields[col.at(name)]); };

    ImageRecord img;
    img.image_id = field("image_id");
    img.segment_id = field("segment_id");
    if (img.image_id.empty() || img.segment_id.empty())
      fail(ErrorCode::ManifestParseError, where + ": empty image_id or segment_id");
    if (!image_ids.insert(img.image_id).second)
      fail(ErrorCode::ManifestParseError, where + ": duplicate image_id '" + img.image_id + "'");
    auto order = detail::parse_int(field("order_in_segment"));
    if (!order || *order < 1 || *order > kMaxImagesPerSegment)
      fail(ErrorCode::ManifestParseError, where + ": order_in_segment must be an integer in 1..4");
    img.order_in_segment = *order;
    auto lat = detail::parse_double(field("latitude"));
    auto lon = detail::parse_double(field("longitude"));
    if (!lat || !lon || *lat < -90 || *lat > 90 || *lon < -180 || *lon > 180)
      fail(ErrorCode::ManifestParseError, where + ": invalid latitude/longitude");
    img.latitude = *lat;
    img.longitude = *lon;
    if (auto when = field("captured_at"); !when.empty()) {
      img.captured_at = parse_timestamp(when);
      if (!img.captured_at) fail(ErrorCode::ManifestParseError, where + ": invalid captured_at '" + when + "'");
    }
    for (const char* dim : {"width", "height"}) {
      if (!col.count(dim) || field(dim).empty()) continue;
      auto v = detail::parse_int(field(dim));
      if (!v || *v <= 0) fail(ErrorCode::ManifestParseError, where + ": invalid " + dim);
      (std::string_view(dim) == "width" ? img.width : img.height) = *v;
    }
    const auto rel = field("relative_path");
    img.path = image_root / rel;
    if (!options.allow_missing_images && !std::filesystem::exists(img.path))
      fail(ErrorCode::DanglingReference, where + ": image file not found: " + img.path.string());

    if (!segment_orders[img.segment_id].emplace(img.order_in_segment, img.image_id).second)
      fail(ErrorCode::ManifestParseError,
           where + ": segment '" + img.segment_id + "' repeats order " + std::to_string(img.order_in_segment));

    for (const auto& [index, attr] : gt_columns) {
      auto cell = util::trim(row.fields[index]);
      if (cell.empty()) continue;
      for (auto& part : util::split(cell, options.multi_label_separator)) {
        auto code = util::trim(part);
        if (!attr->has_code(code))
          fail(ErrorCode::GroundTruthCodeUnknown,
               where + " (image " + img.image_id + "): attribute '" + attr->id + "' has no class '" + code + "'");
        auto& codes = segment_codes[img.segment_id][attr->id];
        if (std::find(codes.begin(), codes.end(), code) == codes.end()) codes.push_back(code);
      }
    }

    if (!segment_index.count(img.segment_id)) {
      segment_index[img.segment_id] = data.segments.size();
      data.segments.push_back(SegmentRecord{img.segment_id, {}, {}, std::nullopt, std::nullopt});
    }
    data.images.push_back(std::move(img));
  }

  for (auto& seg : data.segments) {
    for (const auto& [order, id] : segment_orders[seg.segment_id]) seg.image_ids.push_back(id);
    for (const auto& [attr_id, codes] : segment_codes[seg.segment_id]) {
      const auto& attr = codebook.at(attr_id);
      seg.ground_truth[attr_id] = detail::reduce_to_highest_risk(attr, codes);
      if (codes.size() > 1)
        data.warnings.push_back("segment " + seg.segment_id + ": attribute " + attr_id + " carries " +
                                util::join(codes, "|") + "; kept highest-risk " + seg.ground_truth[attr_id]);
    }
  }

  std::filesystem::path seg_path = options.segments_csv.value_or(manifest.parent_path() / "segments.csv");
  if (std::filesystem::exists(seg_path)) {
    const std::string seg_source = seg_path.string();
    auto seg_rows = csv::parse(util::read_file(seg_path), seg_source);
    if (!seg_rows.empty()) {
      std::map<std::string, std::size_t> scol;
      for (std::size_t i = 0; i < seg_rows.front().fields.size(); ++i) scol[util::trim(seg_rows.front().fields[i])] = i;
      for (const char* c : {"segment_id", "aadt", "operating_speed"})
        if (!scol.count(c)) fail(ErrorCode::ManifestParseError, seg_source + ": missing column '" + c + "'");
      for (std::size_t r = 1; r < seg_rows.size(); ++r) {
        const auto& row = seg_rows[r];
        const std::string where = seg_source + ":" + std::to_string(row.line);
        if (row.fields.size() != seg_rows.front().fields.size())
          fail(ErrorCode::ManifestParseError, where + ": wrong field count");
        auto id = util::trim(row.fields[scol["segment_id"]]);
        auto it = segment_index.find(id);
        if (it == segment_index.end())
          fail(ErrorCode::DanglingReference, where + ": segment '" + id + "' has no images in the manifest");
        auto& seg = data.segments[it->second];
        auto aadt_text = util::trim(row.fields[scol["aadt"]]);
        auto speed_text = util::trim(row.fields[scol["operating_speed"]]);
        if (!aadt_text.empty()) {
          seg.aadt = detail::parse_double(aadt_text);
          if (!seg.aadt || *seg.aadt < 0) fail(ErrorCode::ManifestParseError, where + ": invalid aadt");
        }
        if (!speed_text.empty()) {
          seg.operating_speed = detail::parse_double(speed_text);
          if (!seg.operating_speed || *seg.operating_speed <= 0)
            fail(ErrorCode::ManifestParseError, where + ": invalid operating_speed");
        }
      }
    }
  } else if (options.segments_csv) {
    fail(ErrorCode::FileNotFound, seg_path.string());
  }
  return data;
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitOptions {
  // Proportions realised by the reference ThaiRAP split (1274 : 243 : 492).
  double train_fraction = 1274.0 / 2009.0;
  double validation_fraction = 243.0 / 2009.0;
  double test_fraction = 492.0 / 2009.0;
  std::vector<NoiseKind> augment_kinds{kAllNoiseKinds.begin(), kAllNoiseKinds.end()};
};

/// Rule semantics:
///   1  attribute has a single observed class -> excluded from stratification
///   2  class has 5..11 samples -> its training images are augmented
///   3  class has <= 4 samples in a two-class attribute -> augmented
///   4  class has <= 4 samples in an attribute with > 2 classes -> unseen
struct ProvenanceEntry {
  std::string image_id;  // empty for attribute-level (rule 1) entries
  int rule = 0;
  std::string attribute_id;
  std::string class_code;
  // "excluded", "unseen", "augment", "augment_skipped_not_train",
  // "augment_superseded_by_rule4"
  std::string action;

  bool operator==(const ProvenanceEntry&) const = default;
};

struct DatasetSplit {
  std::vector<std::string> train_original;
  std::vector<std::string> train_augmented;
  std::vector<std::string> validation;
  std::vector<std::string> test;
  std::vector<std::string> unseen;
  std::vector<std::string> excluded_attributes;
  std::vector<ProvenanceEntry> provenance_log;

  bool operator==(const DatasetSplit&) const = default;
};

inline std::string augmented_image_id(std::string_view image_id, NoiseKind kind) {
  return std::string(image_id) + "__aug_" + std::string(noise_name(kind));
}

namespace detail {

using Label = std::pair<std::string, std::string>;  // (attribute id, class code)

struct SplitUnit {
  const SegmentRecord* segment = nullptr;
  double weight = 0.0;  // images in the segment
  std::vector<Label> labels;
  int assigned = -1;    // 0 train, 1 validation, 2 test
};

/// Iterative stratification over segments: repeatedly take the label with
/// the fewest unassigned samples and hand its segments to whichever split
/// most lacks that label.
inline void stratify(std::vector<SplitUnit>& units, const std::array<double, 3>& fractions, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> order(units.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  std::map<Label, double> label_weight;
  double total_weight = 0.0;
  for (const auto& u : units) {
    total_weight += u.weight;
    for (const auto& l : u.labels) label_weight[l] += u.weight;
  }
  std::array<std::map<Label, double>, 3> desired;
  std::array<double, 3> desired_total{};
  for (int s = 0; s < 3; ++s) {
    desired_total[s] = fractions[s] * total_weight;
    for (const auto& [l, w] : label_weight) desired[s][l] = fractions[s] * w;
  }

  auto assign = [&](SplitUnit& u) {
    int best = 0;
    for (int s = 1; s < 3; ++s)
      if (desired_total[s] > desired_total[best]) best = s;
    u.assigned = best;
  };
  auto assign_for_label = [&](SplitUnit& u, const Label& label) {
    int best = 0;
    for (int s = 1; s < 3; ++s) {
      const double a = desired[s][label], b = desired[best][label];
      if (a > b || (a == b && desired_total[s] > desired_total[best])) best = s;
    }
    u.assigned = best;
  };
  auto commit = [&](const SplitUnit& u) {
    desired_total[u.assigned] -= u.weight;
    for (const auto& l : u.labels) desired[u.assigned][l] -= u.weight;
  };

  std::map<Label, double> remaining = label_weight;
  while (true) {
    const Label* rarest = nullptr;
    double rarest_weight = 0.0;
    for (const auto& [l, w] : remaining) {
      if (w <= 0.0) continue;
      if (!rarest || w < rarest_weight) {
        rarest = &l;
        rarest_weight = w;
      }
    }
    if (!rarest) break;
    const Label label = *rarest;
    for (auto i : order) {
      auto& u = units[i];
      if (u.assigned >= 0 || std::find(u.labels.begin(), u.labels.end(), label) == u.labels.end()) continue;
      assign_for_label(u, label);
      commit(u);
      for (const auto& l : u.labels) remaining[l] -= u.weight;
    }
  }
  for (auto i : order) {
    auto& u = units[i];
    if (u.assigned >= 0) continue;
    assign(u);
    commit(u);
  }
}

}  // namespace detail

/// Applies the four split rules, then stratifies what remains. A pure
/// function of (segments, codebook, seed, options). Segments are kept whole:
/// all images of a road segment land in the same set.
inline DatasetSplit split_dataset(const std::vector<SegmentRecord>& segments, const Codebook& codebook,
                                  std::uint64_t seed, const SplitOptions& options = {}) {
  std::size_t image_count = 0;
  for (const auto& s : segments) image_count += s.image_ids.size();
  if (image_count == 0) fail(ErrorCode::EmptyDataset, "no images to split");

  // Per (attribute, class) sample counts, in images.
  std::map<std::string, std::map<std::string, std::size_t>> counts;
  for (const auto& s : segments)
    for (const auto& [attr, code] : s.ground_truth) {
      codebook.at(attr);
      counts[attr][code] += s.image_ids.size();
    }

  DatasetSplit split;
  std::set<std::string> excluded;
  std::set<std::string> unseen_segments;
  struct Mark {
    int rule;
    std::string attr, code;
  };
  std::vector<Mark> augment_marks;
  std::vector<Mark> unseen_marks;

  for (const auto& [attr, classes] : counts) {  // alphabetical by attribute id
    const std::size_t k = classes.size();
    if (k == 1) {
      excluded.insert(attr);
      split.excluded_attributes.push_back(attr);
      split.provenance_log.push_back({"", 1, attr, classes.begin()->first, "excluded"});
      continue;
    }
    for (const auto& [code, n] : classes) {
      if (k > 2 && n <= 4) {
        unseen_marks.push_back({4, attr, code});
      } else if (n >= 5 && n <= 11) {
        augment_marks.push_back({2, attr, code});
      } else if (n <= 4 && k == 2) {
        augment_marks.push_back({3, attr, code});
      }
    }
  }

  auto segments_with = [&](const Mark& m) {
    std::vector<const SegmentRecord*> out;
    for (const auto& s : segments) {
      auto it = s.ground_truth.find(m.attr);
      if (it != s.ground_truth.end() && it->second == m.code) out.push_back(&s);
    }
    return out;
  };

  for (const auto& m : unseen_marks)
    for (const auto* s : segments_with(m)) unseen_segments.insert(s->segment_id);

  std::vector<detail::SplitUnit> units;
  for (const auto& s : segments) {
    if (unseen_segments.count(s.segment_id) || s.image_ids.empty()) continue;
    detail::SplitUnit u;
    u.segment = &s;
    u.weight = static_cast<double>(s.image_ids.size());
    for (const auto& [attr, code] : s.ground_truth)
      if (!excluded.count(attr)) u.labels.emplace_back(attr, code);
    units.push_back(std::move(u));
  }
  detail::stratify(units, {options.train_fraction, options.validation_fraction, options.test_fraction}, seed);

  std::map<std::string, int> placement;  // segment id -> 0/1/2, 3 = unseen
  for (const auto& u : units) placement[u.segment->segment_id] = u.assigned;
  for (const auto& id : unseen_segments) placement[id] = 3;

  for (const auto& s : segments) {
    auto it = placement.find(s.segment_id);
    if (it == placement.end()) continue;
    auto& bucket = it->second == 0   ? split.train_original
                   : it->second == 1 ? split.validation
                   : it->second == 2 ? split.test
                                     : split.unseen;
    bucket.insert(bucket.end(), s.image_ids.begin(), s.image_ids.end());
  }

  std::set<std::string> to_augment;
  for (const auto& m : augment_marks)
    for (const auto* s : segments_with(m)) {
      const int where = placement.at(s->segment_id);
      for (const auto& img : s->image_ids) {
        std::string action = where == 0   ? "augment"
                             : where == 3 ? "augment_superseded_by_rule4"
                                          : "augment_skipped_not_train";
        if (where == 0) to_augment.insert(img);
        split.provenance_log.push_back({img, m.rule, m.attr, m.code, std::move(action)});
      }
    }
  for (const auto& m : unseen_marks)
    for (const auto* s : segments_with(m))
      for (const auto& img : s->image_ids) split.provenance_log.push_back({img, 4, m.attr, m.code, "unseen"});

  for (const auto& img : to_augment)
    for (auto kind : options.augment_kinds) split.train_augmented.push_back(augmented_image_id(img, kind));

  for (auto* v : {&split.train_original, &split.train_augmented, &split.validation, &split.test, &split.unseen})
    std::sort(v->begin(), v->end());
  std::sort(split.provenance_log.begin(), split.provenance_log.end(), [](const auto& a, const auto& b) {
    return std::tie(a.rule, a.attribute_id, a.class_code, a.image_id, a.action) <
           std::tie(b.rule, b.attribute_id, b.class_code, b.image_id, b.action);
  });
  return split;
}

inline nlohmann::ordered_json split_to_json(const DatasetSplit& split, std::uint64_t seed) {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["train_original"] = split.train_original;
  j["train_augmented"] = split.train_augmented;
  j["validation"] = split.validation;
  j["test"] = split.test;
  j["unseen"] = split.unseen;
  j["excluded_attributes"] = split.excluded_attributes;
  auto log = nlohmann::ordered_json::array();
  for (const auto& e : split.provenance_log) {
    nlohmann::ordered_json row;
    row["image_id"] = e.image_id;
    row["rule"] = e.rule;
    row["attribute_id"] = e.attribute_id;
    row["class_code"] = e.class_code;
    row["action"] = e.action;
    log.push_back(std::move(row));
  }
  j["provenance_log"] = std::move(log);
  return j;
}

inline DatasetSplit split_from_json(const nlohmann::json& j) {
  DatasetSplit split;
  try {
    split.train_original = j.at("train_original").get<std::vector<std::string>>();
    split.train_augmented = j.at("train_augmented").get<std::vector<std::string>>();
    split.validation = j.at("validation").get<std::vector<std::string>>();
    split.test = j.at("test").get<std::vector<std::string>>();
    split.unseen = j.at("unseen").get<std::vector<std::string>>();
    if (j.contains("excluded_attributes"))
      split.excluded_attributes = j["excluded_attributes"].get<std::vector<std::string>>();
    if (j.contains("provenance_log"))
      for (const auto& e : j["provenance_log"])
        split.provenance_log.push_back({e.at("image_id").get<std::string>(), e.at("rule").get<int>(),
                                        e.at("attribute_id").get<std::string>(), e.at("class_code").get<std::string>(),
                                        e.at("action").get<std::string>()});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::SchemaViolation, std::string("split file: ") + e.what());
  }
  return split;
}

}  // namespace roadcode
