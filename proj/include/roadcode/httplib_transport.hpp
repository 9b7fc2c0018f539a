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

#include <httplib.h>

#include <string>

#include "roadcode/http.hpp"
#include "roadcode/util.hpp"

namespace roadcode {

/// HttpTransport over cpp-httplib; one client per request.
class HttplibTransport : public HttpTransport {
 public:
  HttpResponse send(const HttpRequest& request) override {
    auto scheme_end = request.url.find("://");
    if (scheme_end == std::string::npos) return {0, "", "malformed url " + request.url};
    auto path_start = request.url.find('/', scheme_end + 3);
    std::string origin = path_start == std::string::npos ? request.url : request.url.substr(0, path_start);
    std::string path = path_start == std::string::npos ? "/" : request.url.substr(path_start);

    httplib::Client client(origin);
    const auto secs = static_cast<time_t>(request.timeout_seconds);
    client.set_connection_timeout(secs, 0);
    client.set_read_timeout(secs, 0);
    client.set_write_timeout(secs, 0);
    client.set_follow_location(true);

    httplib::Headers headers;
    std::string content_type = "application/json";
    for (const auto& [k, v] : request.headers) {
      if (util::to_lower(k) == "content-type")
        content_type = v;
      else
        headers.emplace(k, v);
    }
    httplib::Result result = request.method == "POST" ? client.Post(path, headers, request.body, content_type)
                                                      : client.Get(path, headers);
    if (!result) return {0, "", httplib::to_string(result.error())};
    return {result->status, result->body, ""};
  }
};

}  // namespace roadcode
