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

#include <cmath>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "roadcode/codebook.hpp"
#include "roadcode/util.hpp"

namespace roadcode {

enum class InvalidReason { Missing, UnknownCode, Unparseable };

constexpr std::string_view reason_name(InvalidReason r) noexcept {
  switch (r) {
    case InvalidReason::Missing: return "Missing";
    case InvalidReason::UnknownCode: return "UnknownCode";
    case InvalidReason::Unparseable: return "Unparseable";
  }
  return "";
}

inline std::optional<InvalidReason> parse_reason(std::string_view s) {
  for (auto r : {InvalidReason::Missing, InvalidReason::UnknownCode, InvalidReason::Unparseable})
    if (reason_name(r) == s) return r;
  return std::nullopt;
}

struct InvalidEntry {
  std::string attribute_id;
  InvalidReason reason = InvalidReason::Missing;

  bool operator==(const InvalidEntry&) const = default;
};

struct ParseOptions {
  // Accept a class label where a code was expected and map it to the code.
  bool label_salvage = true;
};

struct ParseResult {
  std::map<std::string, std::string> predictions;
  std::vector<InvalidEntry> invalid;        // codebook order
  std::vector<std::string> label_salvaged;  // attributes answered by label
  // Attribute keys recognised in the response, valid or not. Zero means the
  // body carried nothing usable.
  std::size_t recognised_keys = 0;
  bool json_object_found = false;
};

namespace detail {

/// End of the balanced object starting at `start`, honouring string
/// literals; npos when unbalanced.
inline std::size_t balanced_object_end(std::string_view text, std::size_t start) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    char c = text[i];
    if (in_string) {
      if (c == '\\')
        ++i;
      else if (c == '"')
        in_string = false;
      continue;
    }
    if (c == '"')
      in_string = true;
    else if (c == '{')
      ++depth;
    else if (c == '}' && --depth == 0)
      return i;
  }
  return std::string_view::npos;
}

/// Every balanced, parseable top-level object in `text`, in order.
inline std::vector<nlohmann::ordered_json> json_objects(std::string_view text) {
  std::vector<nlohmann::ordered_json> out;
  for (std::size_t pos = text.find('{'); pos != std::string_view::npos; pos = text.find('{', pos + 1)) {
    auto end = balanced_object_end(text, pos);
    if (end == std::string_view::npos) continue;
    auto parsed = nlohmann::ordered_json::parse(text.substr(pos, end - pos + 1), nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object()) continue;
    out.push_back(std::move(parsed));
    pos = end;
  }
  return out;
}

/// Last-resort extraction of "key": "value" / "key": 12 pairs from text that
/// is not valid JSON (truncated output, trailing commas, comments).
inline nlohmann::ordered_json salvage_pairs(std::string_view text) {
  static const std::regex pair_re(R"re("([^"\\]{1,200})"\s*:\s*(?:"((?:[^"\\]|\\.){0,200})"|(-?\d+(?:\.\d+)?)))re");
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), pair_re); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    const std::string key = m[1].str();
    if (out.contains(key)) continue;
    if (m[2].matched)
      out[key] = m[2].str();
    else
      out[key] = m[3].str();
  }
  return out;
}

/// Text form of a scalar answer, or nullopt for arrays, booleans, null.
inline std::optional<std::string> answer_text(const nlohmann::ordered_json& v) {
  if (v.is_string()) return util::trim(v.get<std::string>());
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number_float()) {
    double d = v.get<double>();
    if (std::isfinite(d) && d == std::floor(d) && std::fabs(d) < 1e15) return std::to_string(static_cast<long long>(d));
    return v.dump();
  }
  if (v.is_object()) {
    for (const char* k : {"code", "class", "value"})
      if (v.contains(k)) return answer_text(v[k]);
  }
  return std::nullopt;
}

}  // namespace detail

/// Extracts per-attribute class codes from a model response. Total over any
/// input: failures become per-attribute invalid entries, and returned codes
/// are always codes of the codebook.
inline ParseResult parse_response(std::string_view raw, const Codebook& codebook, const ParseOptions& options = {}) {
  ParseResult result;
  std::map<std::string, const AttributeDefinition*> by_key;
  for (const auto& a : codebook.attributes) {
    by_key.emplace(util::normalize_key(a.id), &a);
    by_key.emplace(util::normalize_key(a.display_name), &a);
  }
  auto count_matches = [&](const nlohmann::ordered_json& obj) {
    std::size_t n = 0;
    for (const auto& [k, _] : obj.items()) n += by_key.count(util::normalize_key(k));
    return n;
  };
  // Attribute map of `obj`, unwrapping {"predictions": {...}} style envelopes.
  auto attribute_map = [&](const nlohmann::ordered_json& obj) -> std::optional<nlohmann::ordered_json> {
    if (count_matches(obj) > 0) return obj;
    for (const auto& [k, v] : obj.items())
      if (v.is_object() && count_matches(v) > 0) return v;
    return std::nullopt;
  };

  // The first object carrying attribute keys wins; prose may hold others.
  nlohmann::ordered_json body = nlohmann::ordered_json::object();
  auto objects = detail::json_objects(raw);
  result.json_object_found = !objects.empty();
  bool chosen = false;
  for (const auto& o : objects)
    if (auto m = attribute_map(o)) {
      body = std::move(*m);
      chosen = true;
      break;
    }
  if (!chosen)
    if (auto m = attribute_map(detail::salvage_pairs(raw))) body = std::move(*m);

  std::map<std::string, const nlohmann::ordered_json*> answers;  // attribute id -> first value
  for (const auto& [k, v] : body.items()) {
    auto it = by_key.find(util::normalize_key(k));
    if (it == by_key.end()) continue;
    answers.emplace(it->second->id, &v);
  }
  result.recognised_keys = answers.size();
  const bool nothing_usable = answers.empty() && !result.json_object_found;

  for (const auto& attr : codebook.attributes) {
    auto it = answers.find(attr.id);
    if (it == answers.end()) {
      result.invalid.push_back({attr.id, nothing_usable ? InvalidReason::Unparseable : InvalidReason::Missing});
      continue;
    }
    auto text = detail::answer_text(*it->second);
    if (!text) {
      result.invalid.push_back({attr.id, InvalidReason::Unparseable});
      continue;
    }
    if (attr.has_code(*text)) {
      result.predictions[attr.id] = *text;
      continue;
    }
    const AttributeClass* by_label = nullptr;
    if (options.label_salvage) {
      const auto wanted = util::normalize_key(*text);
      for (const auto& c : attr.classes)
        if (util::normalize_key(c.label) == wanted) {
          by_label = &c;
          break;
        }
    }
    if (by_label) {
      result.predictions[attr.id] = by_label->code;
      result.label_salvaged.push_back(attr.id);
    } else {
      result.invalid.push_back({attr.id, InvalidReason::UnknownCode});
    }
  }
  return result;
}

}  // namespace roadcode
