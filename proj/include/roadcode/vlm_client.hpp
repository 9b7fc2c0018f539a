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

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "roadcode/codebook.hpp"
#include "roadcode/digest.hpp"
#include "roadcode/error.hpp"
#include "roadcode/http.hpp"
#include "roadcode/prompting.hpp"
#include "roadcode/rate_limiter.hpp"
#include "roadcode/response_parser.hpp"
#include "roadcode/util.hpp"

namespace roadcode {

struct BackendDescriptor {
  std::string name = "mock";  // model name sent to the provider
  // "mock", "gemini" or "openai"; inferred from `name` when empty.
  std::string provider;
  std::string endpoint;  // API base URL, or the fixture file for the mock
  std::string credentials_env;
  double request_timeout = 120.0;  // seconds
  int max_retries = 3;
  double rate_limit = 15.0;  // requests per minute
  double backoff_initial = 2.0;  // seconds, doubled per retry
  double backoff_max = 60.0;

  std::string resolved_provider() const {
    if (!provider.empty()) return provider;
    auto n = util::to_lower(name);
    if (n == "mock" || n.rfind("mock", 0) == 0) return "mock";
    if (n.rfind("gemini", 0) == 0) return "gemini";
    if (n.rfind("gpt", 0) == 0 || n.rfind("o1", 0) == 0 || n.rfind("o3", 0) == 0 || n.rfind("o4", 0) == 0)
      return "openai";
    return n;
  }

  void validate() const {
    if (name.empty()) fail(ErrorCode::ConfigError, "backend.name must not be empty");
    if (max_retries < 0) fail(ErrorCode::ConfigError, "backend.max_retries must be >= 0");
    if (!(rate_limit > 0)) fail(ErrorCode::ConfigError, "backend.rate_limit must be > 0");
    if (!(request_timeout > 0)) fail(ErrorCode::ConfigError, "backend.request_timeout must be > 0");
    auto p = resolved_provider();
    if (p != "mock" && p != "gemini" && p != "openai")
      fail(ErrorCode::ConfigError, "backend.provider '" + p + "' is not one of mock, gemini, openai");
  }
};

struct ParsedPredictions {
  std::string image_id;
  std::string model;
  std::map<std::string, std::string> predictions;
  std::vector<InvalidEntry> invalid_attributes;
  std::vector<std::string> label_salvaged;
  std::string raw_response;
  std::string prompt_digest;

  bool operator==(const ParsedPredictions&) const = default;
};

inline nlohmann::ordered_json to_json(const ParsedPredictions& p) {
  nlohmann::ordered_json j;
  j["image_id"] = p.image_id;
  j["model"] = p.model;
  j["prompt_digest"] = p.prompt_digest;
  nlohmann::ordered_json preds = nlohmann::ordered_json::object();
  for (const auto& [k, v] : p.predictions) preds[k] = v;
  j["predictions"] = std::move(preds);
  auto invalid = nlohmann::ordered_json::array();
  for (const auto& e : p.invalid_attributes)
    invalid.push_back({{"attribute_id", e.attribute_id}, {"reason", std::string(reason_name(e.reason))}});
  j["invalid_attributes"] = std::move(invalid);
  j["label_salvaged"] = p.label_salvaged;
  j["raw_response"] = p.raw_response;
  return j;
}

inline ParsedPredictions predictions_from_json(const nlohmann::json& j) {
  ParsedPredictions p;
  try {
    p.image_id = j.at("image_id").get<std::string>();
    p.model = j.value("model", std::string());
    p.prompt_digest = j.value("prompt_digest", std::string());
    for (const auto& [k, v] : j.at("predictions").items()) p.predictions[k] = v.get<std::string>();
    if (j.contains("invalid_attributes"))
      for (const auto& e : j["invalid_attributes"]) {
        auto reason = parse_reason(e.at("reason").get<std::string>());
        if (!reason) fail(ErrorCode::SchemaViolation, "unknown invalid reason in predictions for " + p.image_id);
        p.invalid_attributes.push_back({e.at("attribute_id").get<std::string>(), *reason});
      }
    if (j.contains("label_salvaged")) p.label_salvaged = j["label_salvaged"].get<std::vector<std::string>>();
    p.raw_response = j.value("raw_response", std::string());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::SchemaViolation, std::string("prediction record: ") + e.what());
  }
  return p;
}

/// Raised by backends; `retryable` failures are retried by VlmClient.
struct BackendFailure {
  enum class Kind { Auth, RateLimited, Transient, Fatal };
  Kind kind;
  std::string message;
};

class VlmBackend {
 public:
  virtual ~VlmBackend() = default;
  virtual std::string model() const = 0;
  /// Decoding settings sent with every request; part of the cache key.
  virtual nlohmann::ordered_json decoding_params() const = 0;
  /// Returns the model's text answer. Throws BackendFailure.
  virtual std::string complete(const SystemInstruction& system, const UserPrompt& user) = 0;
};

/// Deterministic offline backend. Answers come from a fixture table keyed by
/// image id (a JSON object of attribute -> code, or a raw response string);
/// images absent from the table get a stable pseudo-random valid answer.
class MockBackend : public VlmBackend {
 public:
  MockBackend(std::string model, const Codebook& codebook, std::map<std::string, std::string> table = {})
      : model_(std::move(model)), codebook_(codebook), table_(std::move(table)) {}

  static std::map<std::string, std::string> load_table(const std::filesystem::path& fixture) {
    std::map<std::string, std::string> table;
    if (fixture.empty()) return table;
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(util::read_file(fixture));
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorCode::ConfigError, "mock fixture " + fixture.string() + ": " + e.what());
    }
    const auto& responses = j.contains("responses") ? j["responses"] : j;
    for (const auto& [id, v] : responses.items()) table[id] = v.is_string() ? v.get<std::string>() : v.dump();
    return table;
  }

  std::string model() const override { return model_; }
  nlohmann::ordered_json decoding_params() const override { return {{"mock", true}}; }

  std::string complete(const SystemInstruction&, const UserPrompt& user) override {
    calls_.fetch_add(1);
    if (auto it = table_.find(user.image_id); it != table_.end()) return it->second;
    nlohmann::ordered_json answer;
    answer["image_id"] = user.image_id;
    for (const auto& attr : codebook_.attributes) {
      auto h = Sha256().add_field(user.image_id).add_field(attr.id).hex();
      auto pick = std::stoull(h.substr(0, 12), nullptr, 16) % attr.classes.size();
      answer[attr.id] = attr.classes[pick].code;
    }
    return answer.dump();
  }

  std::size_t calls() const { return calls_.load(); }

 private:
  std::string model_;
  const Codebook& codebook_;
  std::map<std::string, std::string> table_;
  std::atomic<std::size_t> calls_{0};
};

namespace detail {

inline BackendFailure classify_http(const HttpResponse& r) {
  if (r.status == 0) return {BackendFailure::Kind::Transient, "transport: " + r.error};
  const std::string msg = "HTTP " + std::to_string(r.status) + ": " + r.body.substr(0, 300);
  if (r.status == 401 || r.status == 403) return {BackendFailure::Kind::Auth, msg};
  if (r.status == 429) return {BackendFailure::Kind::RateLimited, msg};
  if (r.status == 408 || r.status >= 500) return {BackendFailure::Kind::Transient, msg};
  return {BackendFailure::Kind::Fatal, msg};
}

inline std::string credential(const BackendDescriptor& d) {
  if (d.credentials_env.empty()) fail(ErrorCode::AuthError, "backend '" + d.name + "' names no credentials_env");
  const char* v = std::getenv(d.credentials_env.c_str());
  if (!v || !*v) fail(ErrorCode::AuthError, "environment variable " + d.credentials_env + " is not set");
  return v;
}

inline std::string data_base64(const UserPrompt& user) {
  return base64_encode(std::span<const unsigned char>(user.image->data(), user.image->size()));
}

}  // namespace detail

/// Gemini generateContent API.
class GeminiBackend : public VlmBackend {
 public:
  GeminiBackend(BackendDescriptor d, std::shared_ptr<HttpTransport> transport)
      : d_(std::move(d)), key_(detail::credential(d_)), transport_(std::move(transport)) {
    if (d_.endpoint.empty()) d_.endpoint = "https://generativelanguage.googleapis.com/v1beta";
  }

  std::string model() const override { return d_.name; }
  nlohmann::ordered_json decoding_params() const override {
    return {{"temperature", 0}, {"topP", 1}, {"topK", 1}, {"candidateCount", 1},
            {"responseMimeType", "application/json"}};
  }

  nlohmann::ordered_json request_body(const SystemInstruction& system, const UserPrompt& user) const {
    nlohmann::ordered_json body;
    body["systemInstruction"] = {{"parts", nlohmann::ordered_json::array({{{"text", system.rendered}}})}};
    nlohmann::ordered_json parts = nlohmann::ordered_json::array();
    parts.push_back({{"text", user.rendered_text}});
    parts.push_back({{"inlineData", {{"mimeType", user.mime_type}, {"data", detail::data_base64(user)}}}});
    body["contents"] = nlohmann::ordered_json::array({{{"role", "user"}, {"parts", parts}}});
    body["generationConfig"] = decoding_params();
    return body;
  }

  std::string complete(const SystemInstruction& system, const UserPrompt& user) override {
    HttpRequest req;
    req.method = "POST";
    req.url = d_.endpoint + "/models/" + d_.name + ":generateContent";
    req.headers = {{"x-goog-api-key", key_}, {"Content-Type", "application/json"}};
    req.body = request_body(system, user).dump();
    req.timeout_seconds = d_.request_timeout;
    auto res = transport_->send(req);
    if (res.status != 200) throw detail::classify_http(res);
    auto j = nlohmann::json::parse(res.body, nullptr, false);
    std::string text;
    if (!j.is_discarded() && j.contains("candidates") && !j["candidates"].empty()) {
      const auto& content = j["candidates"][0].value("content", nlohmann::json::object());
      for (const auto& part : content.value("parts", nlohmann::json::array()))
        if (part.contains("text")) text += part["text"].get<std::string>();
    }
    if (text.empty()) throw BackendFailure{BackendFailure::Kind::Fatal, "no candidate text in response"};
    return text;
  }

 private:
  BackendDescriptor d_;
  std::string key_;
  std::shared_ptr<HttpTransport> transport_;
};

/// OpenAI chat completions API.
class OpenAiBackend : public VlmBackend {
 public:
  OpenAiBackend(BackendDescriptor d, std::shared_ptr<HttpTransport> transport)
      : d_(std::move(d)), key_(detail::credential(d_)), transport_(std::move(transport)) {
    if (d_.endpoint.empty()) d_.endpoint = "https://api.openai.com/v1";
  }

  std::string model() const override { return d_.name; }
  nlohmann::ordered_json decoding_params() const override {
    return {{"temperature", 0}, {"top_p", 1}, {"n", 1}, {"seed", 0}, {"response_format", {{"type", "json_object"}}}};
  }

  nlohmann::ordered_json request_body(const SystemInstruction& system, const UserPrompt& user) const {
    nlohmann::ordered_json body = decoding_params();
    body["model"] = d_.name;
    auto content = nlohmann::ordered_json::array();
    content.push_back({{"type", "text"}, {"text", user.rendered_text}});
    content.push_back({{"type", "image_url"},
                       {"image_url", {{"url", "data:" + user.mime_type + ";base64," + detail::data_base64(user)},
                                      {"detail", "high"}}}});
    body["messages"] = nlohmann::ordered_json::array(
        {{{"role", "system"}, {"content", system.rendered}}, {{"role", "user"}, {"content", content}}});
    return body;
  }

  std::string complete(const SystemInstruction& system, const UserPrompt& user) override {
    HttpRequest req;
    req.method = "POST";
    req.url = d_.endpoint + "/chat/completions";
    req.headers = {{"Authorization", "Bearer " + key_}, {"Content-Type", "application/json"}};
    req.body = request_body(system, user).dump();
    req.timeout_seconds = d_.request_timeout;
    auto res = transport_->send(req);
    if (res.status != 200) throw detail::classify_http(res);
    auto j = nlohmann::json::parse(res.body, nullptr, false);
    if (j.is_discarded() || !j.contains("choices") || j["choices"].empty())
      throw BackendFailure{BackendFailure::Kind::Fatal, "no choices in response"};
    const auto& msg = j["choices"][0].value("message", nlohmann::json::object());
    if (!msg.contains("content") || !msg["content"].is_string())
      throw BackendFailure{BackendFailure::Kind::Fatal, "no message content in response"};
    return msg["content"].get<std::string>();
  }

 private:
  BackendDescriptor d_;
  std::string key_;
  std::shared_ptr<HttpTransport> transport_;
};

inline std::shared_ptr<VlmBackend> make_backend(const BackendDescriptor& d, const Codebook& codebook,
                                                std::shared_ptr<HttpTransport> transport) {
  d.validate();
  const auto provider = d.resolved_provider();
  if (provider == "mock")
    return std::make_shared<MockBackend>(d.name, codebook, MockBackend::load_table(d.endpoint));
  if (provider == "gemini") return std::make_shared<GeminiBackend>(d, std::move(transport));
  return std::make_shared<OpenAiBackend>(d, std::move(transport));
}

/// Caps the number of backend requests (attempts, including retries) per run.
class RequestBudget {
 public:
  explicit RequestBudget(std::int64_t limit) : limit_(limit) {}

  void acquire() {
    auto used = used_.fetch_add(1);
    if (used >= limit_) {
      used_.fetch_sub(1);
      fail(ErrorCode::BudgetExceeded, "request budget of " + std::to_string(limit_) + " exhausted");
    }
  }

  std::int64_t used() const { return used_.load(); }
  std::int64_t limit() const { return limit_; }

 private:
  std::int64_t limit_;
  std::atomic<std::int64_t> used_{0};
};

/// Content-addressed store: <dir>/<digest>.json holding the raw response
/// and its parsed form. Writes are atomic renames; a per-key lock gives
/// single-writer semantics while readers never block on other keys.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

  std::filesystem::path path_for(const std::string& digest) const { return dir_ / (digest + ".json"); }

  std::optional<ParsedPredictions> get(const std::string& digest) const {
    auto p = path_for(digest);
    if (!std::filesystem::exists(p)) return std::nullopt;
    auto j = nlohmann::json::parse(util::read_file(p), nullptr, false);
    if (j.is_discarded() || !j.contains("parsed")) return std::nullopt;
    return predictions_from_json(j["parsed"]);
  }

  void put(const std::string& digest, const ParsedPredictions& value) {
    nlohmann::ordered_json j;
    j["digest"] = digest;
    j["raw_response"] = value.raw_response;
    j["parsed"] = to_json(value);
    util::write_file_atomic(path_for(digest), j.dump(2) + "\n");
  }

  std::shared_ptr<std::mutex> key_lock(const std::string& digest) {
    std::lock_guard lock(locks_mutex_);
    auto& m = locks_[digest];
    if (!m) m = std::make_shared<std::mutex>();
    return m;
  }

 private:
  std::filesystem::path dir_;
  std::mutex locks_mutex_;
  std::map<std::string, std::shared_ptr<std::mutex>> locks_;
};

struct ClientStats {
  std::int64_t requests = 0;  // backend attempts
  std::int64_t cache_hits = 0;
  std::int64_t retries = 0;
};

/// Dispatches prompts to one backend with caching, rate limiting, retries
/// and request budgeting. Safe to share between worker threads.
class VlmClient {
 public:
  using Sleeper = std::function<void(std::chrono::duration<double>)>;

  VlmClient(BackendDescriptor descriptor, std::shared_ptr<VlmBackend> backend,
            std::optional<std::filesystem::path> cache_dir = std::nullopt,
            std::shared_ptr<RequestBudget> budget = nullptr, ParseOptions parse_options = {})
      : descriptor_(std::move(descriptor)),
        backend_(std::move(backend)),
        budget_(std::move(budget)),
        parse_options_(parse_options),
        limiter_(descriptor_.rate_limit),
        sleeper_([](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); }) {
    descriptor_.validate();
    if (cache_dir) cache_.emplace(*cache_dir);
  }

  void set_sleeper(Sleeper s) { sleeper_ = std::move(s); }

  /// Cache key: model, decoding settings, parser options, both prompt texts
  /// and the image bytes.
  std::string request_digest(const SystemInstruction& system, const UserPrompt& user) const {
    Sha256 h;
    h.add_field("roadcode-request-v1")
        .add_field(backend_->model())
        .add_field(backend_->decoding_params().dump())
        .add_field(parse_options_.label_salvage ? "salvage=1" : "salvage=0")
        .add_field(system.rendered)
        .add_field(user.rendered_text)
        .add_field(user.mime_type);
    if (user.image) h.add_field(std::span<const unsigned char>(user.image->data(), user.image->size()));
    return h.hex();
  }

  ParsedPredictions classify_image(const SystemInstruction& system, const UserPrompt& user, const Codebook& codebook) {
    const auto digest = request_digest(system, user);
    std::shared_ptr<std::mutex> key_lock;
    std::unique_lock<std::mutex> guard;
    if (cache_) {
      key_lock = cache_->key_lock(digest);
      guard = std::unique_lock(*key_lock);
      if (auto hit = cache_->get(digest)) {
        cache_hits_.fetch_add(1);
        if (hit->predictions.empty() && unreadable(parse_response(hit->raw_response, codebook, parse_options_)))
          fail(ErrorCode::ResponseUnparseable, "no attribute could be read from the cached response for " + user.image_id);
        return *hit;
      }
    }

    const std::string raw = call_with_retries(system, user);
    auto parsed = parse_response(raw, codebook, parse_options_);
    const bool unparseable = unreadable(parsed);

    ParsedPredictions out;
    out.image_id = user.image_id;
    out.model = backend_->model();
    out.predictions = std::move(parsed.predictions);
    out.invalid_attributes = std::move(parsed.invalid);
    out.label_salvaged = std::move(parsed.label_salvaged);
    out.raw_response = raw;
    out.prompt_digest = digest;
    for (const auto& a : out.label_salvaged)
      spdlog::info("{}: attribute {} answered by class label, mapped to code {}", out.image_id, a, out.predictions[a]);

    if (cache_) cache_->put(digest, out);
    if (unparseable)
      fail(ErrorCode::ResponseUnparseable, "no attribute could be read from the response for " + user.image_id);
    if (!cache_) return out;
    auto stored = cache_->get(digest);
    if (!stored) fail(ErrorCode::TransportError, "cache write for " + digest + " could not be read back");
    return *stored;
  }

  ClientStats stats() const { return {requests_.load(), cache_hits_.load(), retries_.load()}; }
  const BackendDescriptor& descriptor() const { return descriptor_; }
  VlmBackend& backend() { return *backend_; }

 private:
  static bool unreadable(const ParseResult& parsed) { return parsed.recognised_keys == 0 && !parsed.json_object_found; }

  std::string call_with_retries(const SystemInstruction& system, const UserPrompt& user) {
    BackendFailure last{BackendFailure::Kind::Transient, "no attempt made"};
    for (int attempt = 0; attempt <= descriptor_.max_retries; ++attempt) {
      if (attempt > 0) {
        retries_.fetch_add(1);
        const double delay = std::min(descriptor_.backoff_max, descriptor_.backoff_initial * std::pow(2.0, attempt - 1));
        sleeper_(std::chrono::duration<double>(delay));
      }
      if (budget_) budget_->acquire();
      limiter_.acquire();
      requests_.fetch_add(1);
      try {
        return backend_->complete(system, user);
      } catch (const BackendFailure& f) {
        last = f;
        spdlog::warn("{}: attempt {} failed: {}", user.image_id, attempt + 1, f.message);
        if (f.kind == BackendFailure::Kind::Auth) fail(ErrorCode::AuthError, f.message);
        if (f.kind == BackendFailure::Kind::Fatal) fail(ErrorCode::TransportError, f.message);
      }
    }
    if (last.kind == BackendFailure::Kind::RateLimited)
      fail(ErrorCode::RateLimitedExhausted, "rate limited after " + std::to_string(descriptor_.max_retries + 1) +
                                                " attempts: " + last.message);
    fail(ErrorCode::TransportError,
         "gave up after " + std::to_string(descriptor_.max_retries + 1) + " attempts: " + last.message);
  }

  BackendDescriptor descriptor_;
  std::shared_ptr<VlmBackend> backend_;
  std::shared_ptr<RequestBudget> budget_;
  ParseOptions parse_options_;
  RateLimiter limiter_;
  Sleeper sleeper_;
  std::optional<ResponseCache> cache_;
  std::atomic<std::int64_t> requests_{0};
  std::atomic<std::int64_t> cache_hits_{0};
  std::atomic<std::int64_t> retries_{0};
};

/// Writes one ParsedPredictions per line, preceded by an optional header
/// line of the form {"run_manifest": {...}}.
inline std::string predictions_to_jsonl(const std::vector<ParsedPredictions>& records,
                                        const std::optional<nlohmann::ordered_json>& header = std::nullopt) {
  std::string out;
  if (header) out += nlohmann::ordered_json{{"run_manifest", *header}}.dump() + "\n";
  for (const auto& r : records) out += to_json(r).dump() + "\n";
  return out;
}

struct PredictionFile {
  std::optional<nlohmann::json> header;
  std::vector<ParsedPredictions> records;
  // Attributes the producer never predicted (for example, heads a baseline
  // model was not trained for). Taken from header.excluded_attributes.
  std::vector<std::string> excluded_attributes;
};

inline PredictionFile read_predictions_jsonl(const std::filesystem::path& path) {
  PredictionFile file;
  std::istringstream in(util::read_file(path));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (util::trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      fail(ErrorCode::SchemaViolation, path.string() + ":" + std::to_string(n) + ": not a JSON object");
    if (j.contains("run_manifest")) {
      file.header = j["run_manifest"];
      if (j["run_manifest"].contains("excluded_attributes"))
        file.excluded_attributes = j["run_manifest"]["excluded_attributes"].get<std::vector<std::string>>();
      continue;
    }
    try {
      file.records.push_back(predictions_from_json(j));
    } catch (const Error& e) {
      fail(ErrorCode::SchemaViolation, path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return file;
}

}  // namespace roadcode
