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

#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "roadcode/codebook.hpp"
#include "roadcode/dataset.hpp"
#include "roadcode/digest.hpp"
#include "roadcode/error.hpp"
#include "roadcode/util.hpp"

namespace roadcode {

struct PromptConfig {
  std::string country = "Thailand";
  std::string local_context;
  std::string output_language = "English";
};

/// Substituted when neither the run configuration nor the codebook's
/// country defaults provide local context.
inline constexpr std::string_view kNoLocalContext =
    "No additional local context was provided. Apply the general road rules and infrastructure norms of {country}.";

/// The four editable template texts. System sections may use {country},
/// {local_context} and {attribute_details}; the user template may use
/// {image_id}, {latitude}, {longitude} and {country}.
struct PromptTemplates {
  std::string version = "v1";
  std::string task_specification;
  std::string local_context;
  std::string output_format;
  std::string user_prompt;
};

namespace detail {

inline const std::set<std::string>& known_placeholders() {
  static const std::set<std::string> names = {"country",  "local_context", "attribute_details",
                                              "image_id", "latitude",      "longitude"};
  return names;
}

/// Placeholder names in order of appearance. A placeholder is `{identifier}`;
/// other braces (JSON examples) are literal text.
inline std::vector<std::string> placeholders_in(std::string_view text) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{') continue;
    std::size_t j = i + 1;
    auto ident = [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || (c >= '0' && c <= '9'); };
    if (j >= text.size() || !(ident(text[j]) && !(text[j] >= '0' && text[j] <= '9'))) continue;
    while (j < text.size() && ident(text[j])) ++j;
    if (j < text.size() && text[j] == '}') {
      names.emplace_back(text.substr(i + 1, j - i - 1));
      i = j;
    }
  }
  return names;
}

inline std::string substitute(std::string_view text, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '{') {
      auto close = text.find('}', i);
      if (close != std::string_view::npos) {
        auto it = values.find(std::string(text.substr(i + 1, close - i - 1)));
        if (it != values.end()) {
          out += it->second;
          i = close;
          continue;
        }
      }
    }
    out.push_back(text[i]);
  }
  return out;
}

inline void check_template(const std::string& name, std::string_view text, const std::set<std::string>& allowed) {
  if (util::trim(text).empty()) fail(ErrorCode::TemplateError, name + ": template is empty");
  for (const auto& p : placeholders_in(text)) {
    if (!known_placeholders().count(p)) fail(ErrorCode::TemplateError, name + ": unknown placeholder {" + p + "}");
    if (!allowed.count(p)) fail(ErrorCode::TemplateError, name + ": placeholder {" + p + "} is not available here");
  }
}

}  // namespace detail

inline void validate_templates(const PromptTemplates& t) {
  const std::set<std::string> system = {"country", "local_context", "attribute_details"};
  detail::check_template("task_specification", t.task_specification, system);
  detail::check_template("local_context", t.local_context, system);
  detail::check_template("output_format", t.output_format, system);
  detail::check_template("user_prompt", t.user_prompt, {"image_id", "latitude", "longitude", "country"});
}

inline const PromptTemplates& default_templates() {
  static const PromptTemplates t = [] {
    PromptTemplates d;
    d.version = "v1";
    d.task_specification =
        "You are an experienced road safety assessor coding road attributes according to the iRAP coding "
        "manual for roads in {country}.\n"
        "For every street-level image you receive, work through these steps:\n"
        "1. Look at the whole scene: carriageway, lanes, markings, roadside, intersections, road users and signs.\n"
        "2. For each <Attribute> listed under Attribute details, read its <Attribute description>.\n"
        "3. Compare the image with every <Category class> of that attribute using its <Category description>.\n"
        "4. Select the single <Category class> that best matches what the image shows. When the evidence is weak, "
        "choose the class a trained coder in {country} would most likely assign.\n"
        "5. Report the selected class code for every attribute in the output format described below.";
    d.local_context = "Images were captured in {country}. {local_context}";
    d.output_format =
        "Return your answer in JSON format only, with no commentary before or after it. Use exactly one key per "
        "attribute, spelled as the attribute id given under Attribute details, and select the best match from the "
        "provided <Category class> list: each value must be one of the class codes listed for that attribute, "
        "written as a string. Include every attribute, and add the key \"image_id\" holding the image id from the "
        "user message. Example shape:\n"
        "{\"image_id\": \"<image id>\", \"<attribute id>\": \"<class code>\", \"<attribute id>\": \"<class code>\"}";
    d.user_prompt =
        "Image ID: {image_id}\n"
        "Location (latitude, longitude): {latitude}, {longitude}\n"
        "Classify every attribute for the attached street-level image.";
    return d;
  }();
  return t;
}

/// Reads task_specification.txt, local_context.txt, output_format.txt and
/// user_prompt.txt (plus an optional VERSION file) from `dir`.
inline PromptTemplates load_templates(const std::filesystem::path& dir) {
  PromptTemplates t;
  auto read = [&](const char* name) {
    auto p = dir / name;
    if (!std::filesystem::exists(p)) fail(ErrorCode::TemplateError, "missing template file " + p.string());
    auto text = util::read_file(p);
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    return text;
  };
  t.task_specification = read("task_specification.txt");
  t.local_context = read("local_context.txt");
  t.output_format = read("output_format.txt");
  t.user_prompt = read("user_prompt.txt");
  if (std::filesystem::exists(dir / "VERSION")) t.version = util::trim(util::read_file(dir / "VERSION"));
  validate_templates(t);
  return t;
}

inline std::string templates_digest(const PromptTemplates& t) {
  return Sha256()
      .add_field(t.version)
      .add_field(t.task_specification)
      .add_field(t.local_context)
      .add_field(t.output_format)
      .add_field(t.user_prompt)
      .hex()
      .substr(0, 16);
}

struct SystemInstruction {
  std::string task_specification;
  std::string local_context;
  std::string attribute_details;
  std::string output_format;
  std::string rendered;
};

/// One entry per attribute: name, id, description, then each class code with
/// its label and description.
inline std::string render_attribute_details(const Codebook& codebook) {
  std::string out;
  for (const auto& attr : codebook.attributes) {
    if (!out.empty()) out += "\n";
    out += "### " + attr.display_name + "\n";
    out += "Attribute: " + attr.id + "\n";
    out += "<Attribute description>: " + attr.description + "\n";
    out += "<Category class> options:\n";
    for (const auto& c : attr.classes)
      out += "- \"" + c.code + "\": " + c.label + ". <Category description>: " + c.description + "\n";
  }
  return out;
}

inline constexpr std::string_view kSectionTask = "## Task specification";
inline constexpr std::string_view kSectionContext = "## Local context";
inline constexpr std::string_view kSectionAttributes = "## Attribute details";
inline constexpr std::string_view kSectionFormat = "## Output format";

inline SystemInstruction build_system_instruction(const Codebook& codebook, const PromptConfig& config,
                                                  const PromptTemplates& templates = default_templates()) {
  if (util::trim(config.country).empty()) fail(ErrorCode::TemplateError, "prompt country must not be empty");
  std::string context = util::trim(config.local_context);
  if (context.empty()) {
    auto it = codebook.country_defaults.find(config.country);
    context = it != codebook.country_defaults.end() ? it->second
                                                    : detail::substitute(kNoLocalContext, {{"country", config.country}});
  }
  SystemInstruction s;
  s.attribute_details = render_attribute_details(codebook);
  const std::map<std::string, std::string> values = {
      {"country", config.country}, {"local_context", context}, {"attribute_details", s.attribute_details}};
  s.task_specification = detail::substitute(templates.task_specification, values);
  s.local_context = detail::substitute(templates.local_context, values);
  s.output_format = detail::substitute(templates.output_format, values);
  if (!config.output_language.empty() && util::to_lower(config.output_language) != "english")
    s.output_format += "\nWrite any free-text values in " + config.output_language + "; keys and codes stay as given.";

  s.rendered.reserve(s.attribute_details.size() + 4096);
  s.rendered += std::string(kSectionTask) + "\n" + s.task_specification + "\n\n";
  s.rendered += std::string(kSectionContext) + "\n" + s.local_context + "\n\n";
  s.rendered += std::string(kSectionAttributes) + "\n" + s.attribute_details + "\n";
  s.rendered += std::string(kSectionFormat) + "\n" + s.output_format + "\n";
  return s;
}

using ImageBytes = std::shared_ptr<const std::vector<unsigned char>>;

struct UserPrompt {
  ImageBytes image;
  std::string mime_type;
  std::string image_id;
  double latitude = 0.0;
  double longitude = 0.0;
  std::string rendered_text;
};

inline std::string format_coordinate(double degrees) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", degrees);
  std::string s = buf;
  if (s == "-0.000000") s = "0.000000";
  return s;
}

inline std::string mime_type_for(const std::filesystem::path& path) {
  auto ext = util::to_lower(path.extension().string());
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".png") return "image/png";
  if (ext == ".webp") return "image/webp";
  return "application/octet-stream";
}

inline UserPrompt build_user_prompt(const ImageRecord& image, ImageBytes bytes, std::string mime_type,
                                    const PromptTemplates& templates = default_templates(),
                                    const std::string& country = "Thailand") {
  if (!bytes || bytes->empty()) fail(ErrorCode::MissingImageBytes, "no image bytes for " + image.image_id);
  if (image.image_id.empty()) fail(ErrorCode::MissingImageBytes, "image without id");
  UserPrompt u;
  u.image = std::move(bytes);
  u.mime_type = std::move(mime_type);
  u.image_id = image.image_id;
  u.latitude = image.latitude;
  u.longitude = image.longitude;
  u.rendered_text = detail::substitute(templates.user_prompt, {{"image_id", image.image_id},
                                                               {"latitude", format_coordinate(image.latitude)},
                                                               {"longitude", format_coordinate(image.longitude)},
                                                               {"country", country}});
  return u;
}

/// Reads the image file named by the record.
inline UserPrompt build_user_prompt(const ImageRecord& image, const PromptTemplates& templates = default_templates(),
                                    const std::string& country = "Thailand") {
  if (image.path.empty() || !std::filesystem::is_regular_file(image.path))
    fail(ErrorCode::MissingImageBytes, image.image_id + ": " + image.path.string());
  auto bytes = std::make_shared<const std::vector<unsigned char>>(util::read_bytes(image.path));
  return build_user_prompt(image, std::move(bytes), mime_type_for(image.path), templates, country);
}

}  // namespace roadcode
