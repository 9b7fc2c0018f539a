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
#include <compare>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "roadcode/digest.hpp"
#include "roadcode/error.hpp"
#include "roadcode/util.hpp"

namespace roadcode {

/// Number of attributes in the complete iRAP coding schema.
inline constexpr std::size_t kFullAttributeCount = 52;

enum class AttributeGroup { ObservedFlows, SpeedLimits, MidBlock, Roadside, Intersections };

inline constexpr std::array<AttributeGroup, 5> kAllGroups = {
    AttributeGroup::ObservedFlows, AttributeGroup::SpeedLimits, AttributeGroup::MidBlock,
    AttributeGroup::Roadside, AttributeGroup::Intersections};

/// Token used in codebook files.
constexpr std::string_view group_token(AttributeGroup g) noexcept {
  switch (g) {
    case AttributeGroup::ObservedFlows: return "ObservedFlows";
    case AttributeGroup::SpeedLimits: return "SpeedLimits";
    case AttributeGroup::MidBlock: return "MidBlock";
    case AttributeGroup::Roadside: return "Roadside";
    case AttributeGroup::Intersections: return "Intersections";
  }
  return "";
}

/// Row label used in report tables.
constexpr std::string_view group_display_name(AttributeGroup g) noexcept {
  switch (g) {
    case AttributeGroup::ObservedFlows: return "Observed Flows";
    case AttributeGroup::SpeedLimits: return "Speed Limits";
    case AttributeGroup::MidBlock: return "Mid-block";
    case AttributeGroup::Roadside: return "Roadside";
    case AttributeGroup::Intersections: return "Intersections";
  }
  return "";
}

inline std::optional<AttributeGroup> parse_group(std::string_view token) {
  for (auto g : kAllGroups)
    if (group_token(g) == token) return g;
  return std::nullopt;
}

struct AttributeClass {
  std::string code;
  std::string label;
  std::string description;
  int risk_rank = 0;  // 0 = safest

  bool operator==(const AttributeClass&) const = default;
};

struct AttributeDefinition {
  std::string id;
  std::string display_name;
  std::string description;
  AttributeGroup group = AttributeGroup::MidBlock;
  std::vector<AttributeClass> classes;
  // Only one class occurs in the reference data; excluded from supervised
  // training and optionally from evaluation.
  bool single_class = false;

  bool operator==(const AttributeDefinition&) const = default;

  const AttributeClass* find(std::string_view code) const {
    auto it = std::find_if(classes.begin(), classes.end(),
                           [&](const AttributeClass& c) { return c.code == code; });
    return it == classes.end() ? nullptr : &*it;
  }

  bool has_code(std::string_view code) const { return find(code) != nullptr; }

  int risk_rank(std::string_view code) const {
    const auto* c = find(code);
    if (!c) fail(ErrorCode::UnknownClassCode, "attribute '" + id + "' has no class '" + std::string(code) + "'");
    return c->risk_rank;
  }

  const AttributeClass& safest() const {
    return *std::min_element(classes.begin(), classes.end(),
                             [](const auto& a, const auto& b) { return a.risk_rank < b.risk_rank; });
  }

  const AttributeClass& riskiest() const {
    return *std::max_element(classes.begin(), classes.end(),
                             [](const auto& a, const auto& b) { return a.risk_rank < b.risk_rank; });
  }
};

class Codebook {
 public:
  std::string version;
  std::vector<AttributeDefinition> attributes;
  std::map<std::string, std::string> country_defaults;
  // Present for fixture codebooks smaller than the full schema.
  std::optional<std::size_t> declared_count;

  bool operator==(const Codebook&) const = default;

  std::size_t size() const noexcept { return attributes.size(); }

  const AttributeDefinition* find(std::string_view id) const {
    auto it = std::find_if(attributes.begin(), attributes.end(),
                           [&](const AttributeDefinition& a) { return a.id == id; });
    return it == attributes.end() ? nullptr : &*it;
  }

  const AttributeDefinition& at(std::string_view id) const {
    const auto* a = find(id);
    if (!a) fail(ErrorCode::SchemaViolation, "unknown attribute '" + std::string(id) + "'");
    return *a;
  }
};

/// Orders two class codes of one attribute by risk.
inline std::strong_ordering risk_compare(const AttributeDefinition& attr, std::string_view a,
                                         std::string_view b) {
  return attr.risk_rank(a) <=> attr.risk_rank(b);
}

namespace detail {

inline void require_keys(const nlohmann::json& obj, const std::set<std::string>& required,
                         const std::set<std::string>& optional, const std::string& where) {
  if (!obj.is_object()) fail(ErrorCode::SchemaViolation, where + ": expected an object");
  for (const auto& key : required)
    if (!obj.contains(key)) fail(ErrorCode::SchemaViolation, where + ": missing key '" + key + "'");
  for (const auto& [key, _] : obj.items())
    if (!required.count(key) && !optional.count(key))
      fail(ErrorCode::SchemaViolation, where + ": unknown key '" + key + "'");
}

inline std::string require_string(const nlohmann::json& obj, const char* key, const std::string& where) {
  const auto& v = obj.at(key);
  if (!v.is_string()) fail(ErrorCode::SchemaViolation, where + ": '" + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace detail

/// Checks every codebook invariant; throws SchemaViolation or DuplicateId.
inline void validate_codebook(const Codebook& book) {
  std::set<std::string> ids;
  for (const auto& attr : book.attributes) {
    const std::string where = "attribute '" + attr.id + "'";
    if (attr.id.empty()) fail(ErrorCode::SchemaViolation, "attribute with empty id");
    if (!ids.insert(attr.id).second) fail(ErrorCode::DuplicateId, where + " defined twice");
    if (attr.classes.empty()) fail(ErrorCode::SchemaViolation, where + ": no classes");
    if (attr.classes.size() < 2 && !attr.single_class)
      fail(ErrorCode::SchemaViolation, where + ": fewer than 2 classes and not flagged single_class");
    std::set<std::string> codes;
    std::set<int> ranks;
    for (const auto& c : attr.classes) {
      if (c.code.empty()) fail(ErrorCode::SchemaViolation, where + ": class with empty code");
      if (!codes.insert(c.code).second)
        fail(ErrorCode::DuplicateId, where + ": duplicate class code '" + c.code + "'");
      if (c.risk_rank < 0)
        fail(ErrorCode::SchemaViolation, where + ", class '" + c.code + "': negative risk_rank");
      if (!ranks.insert(c.risk_rank).second)
        fail(ErrorCode::SchemaViolation, where + ", class '" + c.code + "': duplicate risk_rank " +
                                             std::to_string(c.risk_rank));
    }
  }
  const std::size_t expected = book.declared_count.value_or(kFullAttributeCount);
  if (book.attributes.size() != expected)
    fail(ErrorCode::SchemaViolation, "codebook declares " + std::to_string(expected) + " attributes but has " +
                                         std::to_string(book.attributes.size()));
}

inline Codebook parse_codebook(std::string_view text, const std::string& source = "<codebook>") {
  using detail::require_keys;
  using detail::require_string;
  if (util::trim(text).empty()) fail(ErrorCode::SchemaViolation, source + ": empty file");
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::SchemaViolation, source + ": " + e.what());
  }
  require_keys(root, {"version", "attributes"}, {"attribute_count", "country_defaults"}, source);

  Codebook book;
  book.version = require_string(root, "version", source);
  if (root.contains("attribute_count")) {
    const auto& n = root["attribute_count"];
    if (!n.is_number_unsigned()) fail(ErrorCode::SchemaViolation, source + ": attribute_count must be a non-negative integer");
    book.declared_count = n.get<std::size_t>();
  }
  if (root.contains("country_defaults")) {
    const auto& defaults = root["country_defaults"];
    if (!defaults.is_object()) fail(ErrorCode::SchemaViolation, source + ": country_defaults must be an object");
    for (const auto& [k, v] : defaults.items()) {
      if (!v.is_string()) fail(ErrorCode::SchemaViolation, source + ": country_defaults values must be strings");
      book.country_defaults[k] = v.get<std::string>();
    }
  }
  const auto& attrs = root["attributes"];
  if (!attrs.is_array()) fail(ErrorCode::SchemaViolation, source + ": 'attributes' must be an array");

  for (std::size_t i = 0; i < attrs.size(); ++i) {
    const auto& a = attrs[i];
    std::string where = "attribute #" + std::to_string(i);
    if (a.is_object() && a.contains("id") && a["id"].is_string()) where = "attribute '" + a["id"].get<std::string>() + "'";
    require_keys(a, {"id", "display_name", "description", "group", "classes"}, {"single_class"}, where);
    AttributeDefinition def;
    def.id = require_string(a, "id", where);
    def.display_name = require_string(a, "display_name", where);
    def.description = require_string(a, "description", where);
    auto group = parse_group(require_string(a, "group", where));
    if (!group) fail(ErrorCode::SchemaViolation, where + ": unknown group '" + a["group"].get<std::string>() + "'");
    def.group = *group;
    if (a.contains("single_class")) {
      if (!a["single_class"].is_boolean()) fail(ErrorCode::SchemaViolation, where + ": single_class must be a boolean");
      def.single_class = a["single_class"].get<bool>();
    }
    const auto& classes = a["classes"];
    if (!classes.is_array()) fail(ErrorCode::SchemaViolation, where + ": 'classes' must be an array");
    for (std::size_t j = 0; j < classes.size(); ++j) {
      const auto& c = classes[j];
      const std::string cwhere = where + ", class #" + std::to_string(j);
      require_keys(c, {"code", "label", "description", "risk_rank"}, {}, cwhere);
      AttributeClass cls;
      cls.code = require_string(c, "code", cwhere);
      cls.label = require_string(c, "label", cwhere);
      cls.description = require_string(c, "description", cwhere);
      if (!c["risk_rank"].is_number_integer())
        fail(ErrorCode::SchemaViolation, cwhere + ": risk_rank must be an integer");
      cls.risk_rank = c["risk_rank"].get<int>();
      def.classes.push_back(std::move(cls));
    }
    book.attributes.push_back(std::move(def));
  }
  validate_codebook(book);
  return book;
}

inline Codebook load_codebook(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::FileNotFound, path.string());
  return parse_codebook(util::read_file(path), path.string());
}

inline nlohmann::ordered_json codebook_to_json(const Codebook& book) {
  nlohmann::ordered_json root;
  root["version"] = book.version;
  if (book.declared_count) root["attribute_count"] = *book.declared_count;
  if (!book.country_defaults.empty()) {
    nlohmann::ordered_json defaults = nlohmann::ordered_json::object();
    for (const auto& [k, v] : book.country_defaults) defaults[k] = v;
    root["country_defaults"] = defaults;
  }
  auto attrs = nlohmann::ordered_json::array();
  for (const auto& a : book.attributes) {
    nlohmann::ordered_json j;
    j["id"] = a.id;
    j["display_name"] = a.display_name;
    j["description"] = a.description;
    j["group"] = std::string(group_token(a.group));
    if (a.single_class) j["single_class"] = true;
    auto classes = nlohmann::ordered_json::array();
    for (const auto& c : a.classes) {
      nlohmann::ordered_json cj;
      cj["code"] = c.code;
      cj["label"] = c.label;
      cj["description"] = c.description;
      cj["risk_rank"] = c.risk_rank;
      classes.push_back(std::move(cj));
    }
    j["classes"] = std::move(classes);
    attrs.push_back(std::move(j));
  }
  root["attributes"] = std::move(attrs);
  return root;
}

inline std::string serialize_codebook(const Codebook& book) { return codebook_to_json(book).dump(2) + "\n"; }

/// Short content hash used in run manifests.
inline std::string codebook_digest(const Codebook& book) {
  return sha256_hex(serialize_codebook(book)).substr(0, 16);
}

}  // namespace roadcode
