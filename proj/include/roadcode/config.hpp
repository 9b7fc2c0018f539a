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

#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>

#include <json.hpp>

#include "roadcode/digest.hpp"
#include "roadcode/error.hpp"
#include "roadcode/prompting.hpp"
#include "roadcode/util.hpp"
#include "roadcode/vlm_client.hpp"

namespace roadcode {

// ---------------------------------------------------------------------------
// A TOML subset: `[section]` headers, `key = value` pairs where value is a
// basic "string", an integer, a float or a boolean, and `#` comments.

using ConfigValue = std::variant<std::string, std::int64_t, double, bool>;
using ConfigTable = std::map<std::string, ConfigValue>;  // "section.key" -> value

namespace detail {

inline std::string unquote_basic(std::string_view s, const std::string& where) {
  std::string out;
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    if (s[i] != '\\') {
      out += s[i];
      continue;
    }
    if (++i + 1 > s.size() - 1) fail(ErrorCode::ConfigError, where + ": dangling escape");
    switch (s[i]) {
      case 'n': out += '\n'; break;
      case 't': out += '\t'; break;
      case '"': out += '"'; break;
      case '\\': out += '\\'; break;
      default: fail(ErrorCode::ConfigError, where + ": unsupported escape \\" + std::string(1, s[i]));
    }
  }
  return out;
}

/// Position of a '#' that starts a comment, ignoring ones inside quotes.
inline std::size_t comment_start(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && quoted) {
      ++i;
    } else if (line[i] == '"') {
      quoted = !quoted;
    } else if (line[i] == '#' && !quoted) {
      return i;
    }
  }
  return line.size();
}

}  // namespace detail

inline ConfigTable parse_config_text(std::string_view text, const std::string& source = "<config>") {
  ConfigTable table;
  std::string section;
  std::size_t n = 0;
  for (const auto& raw : util::split(text, '\n')) {
    ++n;
    const std::string where = source + ":" + std::to_string(n);
    std::string line = util::trim(std::string_view(raw).substr(0, detail::comment_start(raw)));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) fail(ErrorCode::ConfigError, where + ": malformed section header");
      section = util::trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorCode::ConfigError, where + ": expected key = value");
    std::string key = util::trim(std::string_view(line).substr(0, eq));
    std::string value = util::trim(std::string_view(line).substr(eq + 1));
    if (key.empty() || value.empty()) fail(ErrorCode::ConfigError, where + ": expected key = value");
    const std::string full = section.empty() ? key : section + "." + key;
    if (table.count(full)) fail(ErrorCode::ConfigError, where + ": duplicate key '" + full + "'");

    if (value.front() == '"') {
      if (value.size() < 2 || value.back() != '"') fail(ErrorCode::ConfigError, where + ": unterminated string");
      table[full] = detail::unquote_basic(value, where);
    } else if (value == "true" || value == "false") {
      table[full] = value == "true";
    } else {
      std::string digits;
      for (char c : value)
        if (c != '_') digits += c;
      char* end = nullptr;
      errno = 0;
      long long i = std::strtoll(digits.c_str(), &end, 10);
      if (*end == '\0' && errno == 0) {
        table[full] = static_cast<std::int64_t>(i);
        continue;
      }
      double d = std::strtod(digits.c_str(), &end);
      if (*end != '\0') fail(ErrorCode::ConfigError, where + ": cannot read value of '" + full + "'");
      table[full] = d;
    }
  }
  return table;
}

// ---------------------------------------------------------------------------

struct RunConfig {
  std::filesystem::path codebook_path;
  std::filesystem::path dataset_manifest;
  std::filesystem::path image_root;  // defaults to the manifest's directory
  BackendDescriptor backend;
  PromptConfig prompt;
  std::filesystem::path template_dir;  // empty: built-in templates
  std::filesystem::path scoring_config_path;
  std::filesystem::path cache_dir;
  std::filesystem::path output_dir = "out";
  std::int64_t request_budget = 1000;
  std::uint64_t seed = 0;
  int parallelism = 1;

  /// Checks field constraints and that the given paths exist.
  void validate() const {
    auto need = [](const std::filesystem::path& p, const char* field) {
      if (p.empty()) fail(ErrorCode::ConfigError, std::string(field) + " is not set");
      if (!std::filesystem::exists(p)) fail(ErrorCode::ConfigError, std::string(field) + ": " + p.string() + " does not exist");
    };
    need(codebook_path, "codebook");
    if (!dataset_manifest.empty()) need(dataset_manifest, "dataset_manifest");
    if (!image_root.empty()) need(image_root, "image_root");
    if (!scoring_config_path.empty()) need(scoring_config_path, "scoring_config");
    if (!template_dir.empty()) need(template_dir, "prompt.template_dir");
    if (request_budget <= 0) fail(ErrorCode::ConfigError, "request_budget must be > 0");
    if (parallelism < 1) fail(ErrorCode::ConfigError, "parallelism must be >= 1");
    try {
      backend.validate();
    } catch (const Error& e) {
      fail(ErrorCode::ConfigError, e.what());
    }
  }

  /// Canonical form of every field that can change outputs. Parallelism,
  /// the cache location and the output location are left out.
  nlohmann::ordered_json canonical_json() const {
    nlohmann::ordered_json j;
    j["codebook"] = codebook_path.generic_string();
    j["dataset_manifest"] = dataset_manifest.generic_string();
    j["image_root"] = image_root.generic_string();
    j["scoring_config"] = scoring_config_path.generic_string();
    j["request_budget"] = request_budget;
    j["seed"] = seed;
    j["backend"] = {{"name", backend.name},
                    {"provider", backend.resolved_provider()},
                    {"endpoint", backend.endpoint},
                    {"credentials_env", backend.credentials_env},
                    {"request_timeout", backend.request_timeout},
                    {"max_retries", backend.max_retries},
                    {"rate_limit", backend.rate_limit},
                    {"backoff_initial", backend.backoff_initial},
                    {"backoff_max", backend.backoff_max}};
    j["prompt"] = {{"country", prompt.country},
                   {"local_context", prompt.local_context},
                   {"output_language", prompt.output_language},
                   {"template_dir", template_dir.generic_string()}};
    return j;
  }

  std::string digest() const { return sha256_hex(canonical_json().dump()).substr(0, 16); }
};

namespace detail {

class ConfigReader {
 public:
  ConfigReader(ConfigTable table, std::filesystem::path base) : table_(std::move(table)), base_(std::move(base)) {}

  template <class F>
  void take(const std::string& key, F&& apply) {
    auto it = table_.find(key);
    if (it == table_.end()) return;
    try {
      apply(it->second);
    } catch (const std::bad_variant_access&) {
      fail(ErrorCode::ConfigError, key + " has the wrong type");
    }
    table_.erase(it);
  }

  void string(const std::string& key, std::string& out) {
    take(key, [&](const ConfigValue& v) { out = std::get<std::string>(v); });
  }
  void path(const std::string& key, std::filesystem::path& out) {
    take(key, [&](const ConfigValue& v) {
      std::filesystem::path p = std::get<std::string>(v);
      out = p.is_absolute() || p.empty() ? p : base_ / p;
    });
  }
  template <class Int>
  void integer(const std::string& key, Int& out) {
    take(key, [&](const ConfigValue& v) { out = static_cast<Int>(std::get<std::int64_t>(v)); });
  }
  void real(const std::string& key, double& out) {
    take(key, [&](const ConfigValue& v) {
      if (auto* i = std::get_if<std::int64_t>(&v)) out = static_cast<double>(*i);
      else out = std::get<double>(v);
    });
  }

  void reject_leftovers() const {
    if (!table_.empty()) fail(ErrorCode::ConfigError, "unknown config key '" + table_.begin()->first + "'");
  }

 private:
  ConfigTable table_;
  std::filesystem::path base_;
};

}  // namespace detail

/// Relative paths are resolved against `base_dir` (the config file's
/// directory). Unknown keys are rejected. Validation is left to the caller
/// so command-line overrides can be applied first.
inline RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir,
                                  const std::string& source = "<config>") {
  detail::ConfigReader r(parse_config_text(text, source), base_dir);
  RunConfig c;
  r.path("codebook", c.codebook_path);
  r.path("dataset_manifest", c.dataset_manifest);
  r.path("image_root", c.image_root);
  r.path("scoring_config", c.scoring_config_path);
  r.path("cache_dir", c.cache_dir);
  r.path("output_dir", c.output_dir);
  r.integer("request_budget", c.request_budget);
  r.integer("seed", c.seed);
  r.integer("parallelism", c.parallelism);
  r.string("backend.name", c.backend.name);
  r.string("backend.provider", c.backend.provider);
  r.string("backend.credentials_env", c.backend.credentials_env);
  r.real("backend.request_timeout", c.backend.request_timeout);
  r.integer("backend.max_retries", c.backend.max_retries);
  r.real("backend.rate_limit", c.backend.rate_limit);
  r.real("backend.backoff_initial", c.backend.backoff_initial);
  r.real("backend.backoff_max", c.backend.backoff_max);
  // The mock's fixture is a file; remote endpoints are URLs.
  r.take("backend.endpoint", [&](const ConfigValue& v) {
    c.backend.endpoint = std::get<std::string>(v);
    if (!c.backend.endpoint.empty() && c.backend.endpoint.find("://") == std::string::npos &&
        std::filesystem::path(c.backend.endpoint).is_relative())
      c.backend.endpoint = (base_dir / c.backend.endpoint).string();
  });
  r.string("prompt.country", c.prompt.country);
  r.string("prompt.local_context", c.prompt.local_context);
  r.string("prompt.output_language", c.prompt.output_language);
  r.path("prompt.template_dir", c.template_dir);
  r.reject_leftovers();
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::ConfigError, "config file " + path.string() + " does not exist");
  return parse_run_config(util::read_file(path), path.parent_path(), path.string());
}

}  // namespace roadcode
