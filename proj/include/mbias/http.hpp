// Copyright 2026 The mbias Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Thin JSON-over-HTTP POST with retries, shared by the chat-completion
// client and the embedding scorer.

#pragma once

#include <chrono>
#include <cstdlib>
#include <optional>
#include <string>
#include <thread>

#include "httplib.h"
// <resolv.h> defines _res as a macro, which clashes with Eigen identifiers.
#ifdef _res
#undef _res
#endif
#include "mbias/error.hpp"
#include "mbias/io.hpp"

namespace mbias {

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  double backoff_multiplier = 2.0;
};

struct HttpTarget {
  std::string origin;  // scheme://host[:port]
  std::string path_prefix;

  /// Splits "http://host:8080/v1" into origin and "/v1".
  static HttpTarget parse(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
      throw IoError("endpoint URL needs a scheme: '" + url + "'");
    }
    const auto path_start = url.find('/', scheme_end + 3);
    HttpTarget t;
    t.origin = url.substr(0, path_start);
    t.path_prefix = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!t.path_prefix.empty() && t.path_prefix.back() == '/') t.path_prefix.pop_back();
    return t;
  }
};

/// Reads a credential from the named environment variable; empty when unset.
inline std::string token_from_env(const std::string& var_name) {
  if (var_name.empty()) return {};
  const char* v = std::getenv(var_name.c_str());
  return v ? std::string(v) : std::string();
}

struct HttpStats {
  int attempts = 0;
};

/// POSTs `body` and returns the parsed JSON reply. Transport errors, 429 and
/// 5xx responses are retried with exponential backoff; other 4xx fail fast.
inline json post_json(const HttpTarget& target, const std::string& path,
                      const json& body, const std::string& bearer_token,
                      std::chrono::milliseconds timeout,
                      const RetryPolicy& retry, HttpStats* stats = nullptr) {
  httplib::Client client(target.origin);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (!bearer_token.empty()) headers.emplace("Authorization", "Bearer " + bearer_token);

  const std::string payload = body.dump();
  auto backoff = retry.initial_backoff;
  std::string last_error = "no attempt made";
  const int attempts = std::max(1, retry.max_attempts);
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    if (stats) ++stats->attempts;
    auto res = client.Post(target.path_prefix + path, headers, payload, "application/json");
    if (res && res->status == 200) {
      try {
        return json::parse(res->body);
      } catch (const json::parse_error& e) {
        throw ValidationError("endpoint returned malformed JSON: " + std::string(e.what()));
      }
    }
    if (!res) {
      last_error = httplib::to_string(res.error());
    } else {
      last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
      const bool retryable = res->status == 429 || res->status >= 500;
      if (!retryable) throw NetworkError(target.origin + path + " failed: " + last_error);
    }
    if (attempt < attempts) {
      std::this_thread::sleep_for(backoff);
      backoff = std::chrono::milliseconds(
          static_cast<long long>(static_cast<double>(backoff.count()) * retry.backoff_multiplier));
    }
  }
  throw NetworkError(target.origin + path + " failed after " + std::to_string(attempts) +
                     " attempts: " + last_error);
}

}  // namespace mbias
