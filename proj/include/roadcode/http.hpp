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
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "roadcode/digest.hpp"
#include "roadcode/error.hpp"
#include "roadcode/util.hpp"

namespace roadcode {

struct HttpRequest {
  std::string method = "GET";
  std::string url;
  std::vector<std::pair<std::string, std::string>> headers;
  std::string body;
  double timeout_seconds = 60.0;
};

struct HttpResponse {
  int status = 0;  // 0 = no response (connection failure, timeout)
  std::string body;
  std::string error;
};

/// Blocking HTTP exchange. Implementations must be safe to call from
/// several threads at once.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse send(const HttpRequest& request) = 0;
};

/// Serves recorded exchanges from a JSONL fixture. Each line holds
/// {"request": {"method", "url"}, "response": {"status", "body" | "body_base64"}}.
/// Matching is on method and URL; an unmatched request yields status 404.
class ReplayTransport : public HttpTransport {
 public:
  explicit ReplayTransport(const std::filesystem::path& fixture) {
    std::ifstream in(fixture);
    if (!in) fail(ErrorCode::FileNotFound, fixture.string());
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (util::trim(line).empty()) continue;
      try {
        auto j = nlohmann::json::parse(line);
        const auto& req = j.at("request");
        const auto& res = j.at("response");
        HttpResponse r;
        r.status = res.at("status").get<int>();
        if (res.contains("body_base64")) {
          if (!base64_decode(res["body_base64"].get<std::string>(), r.body))
            fail(ErrorCode::SchemaViolation, fixture.string() + ":" + std::to_string(n) + ": bad base64 body");
        } else if (res.contains("body")) {
          r.body = res["body"].is_string() ? res["body"].get<std::string>() : res["body"].dump();
        }
        entries_[key(req.value("method", std::string("GET")), req.at("url").get<std::string>())] = std::move(r);
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::SchemaViolation, fixture.string() + ":" + std::to_string(n) + ": " + e.what());
      }
    }
  }

  HttpResponse send(const HttpRequest& request) override {
    std::lock_guard lock(mutex_);
    ++calls_;
    auto it = entries_.find(key(request.method, request.url));
    if (it == entries_.end()) return {404, "", "no recorded response for " + request.method + " " + request.url};
    return it->second;
  }

  std::size_t calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
  }

 private:
  static std::string key(const std::string& method, const std::string& url) { return method + " " + url; }

  mutable std::mutex mutex_;
  std::map<std::string, HttpResponse> entries_;
  std::size_t calls_ = 0;
};

/// Forwards to another transport and appends each exchange to a JSONL file
/// in the ReplayTransport format. Request headers are not recorded, so
/// credentials never reach the fixture.
class RecordingTransport : public HttpTransport {
 public:
  RecordingTransport(std::shared_ptr<HttpTransport> inner, std::filesystem::path out)
      : inner_(std::move(inner)), out_(std::move(out)) {}

  HttpResponse send(const HttpRequest& request) override {
    auto response = inner_->send(request);
    nlohmann::ordered_json j;
    j["request"] = {{"method", request.method}, {"url", request.url}};
    nlohmann::ordered_json res;
    res["status"] = response.status;
    const bool printable = std::all_of(response.body.begin(), response.body.end(), [](unsigned char c) {
                             return c == '\n' || c == '\r' || c == '\t' || (c >= 0x20 && c < 0x80);
                           });
    if (printable)
      res["body"] = response.body;
    else
      res["body_base64"] = base64_encode(std::span(reinterpret_cast<const unsigned char*>(response.body.data()),
                                                   response.body.size()));
    j["response"] = std::move(res);
    std::lock_guard lock(mutex_);
    std::ofstream(out_, std::ios::app) << j.dump() << "\n";
    return response;
  }

 private:
  std::shared_ptr<HttpTransport> inner_;
  std::filesystem::path out_;
  std::mutex mutex_;
};

}  // namespace roadcode
