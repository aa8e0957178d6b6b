#pragma once

// Judge client for the HTTP grading protocol:
//   POST /judge  {"query": str, "passages": [str]}  ->  {"grades": ["S".."D", ...]}
// Transport failures are retried with exponential backoff; a request that
// still fails leaves its passages unjudged. A response that parses but
// violates the protocol is an error.

#include <chrono>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "asym/curation.hpp"

namespace asym {

struct HttpJudgeOptions {
  std::size_t retries = 3;
  std::chrono::milliseconds backoff{200};
  std::chrono::milliseconds timeout{10000};
};

class HttpJudge : public JudgeClient {
 public:
  /// `url` is scheme://host:port, e.g. "http://127.0.0.1:8081".
  HttpJudge(std::string url, HttpJudgeOptions opts = {}) : url_(std::move(url)), opts_(opts) {}

  std::string id() const override { return url_; }

  std::vector<std::optional<Grade>> grade(const Query& query, std::span<const Document> passages) override {
    Json body = {{"query", query.text}, {"passages", Json::array()}};
    for (const auto& p : passages) body["passages"].push_back(p.text);
    const std::string payload = body.dump();

    httplib::Client cli(url_);
    cli.set_connection_timeout(opts_.timeout);
    cli.set_read_timeout(opts_.timeout);
    cli.set_write_timeout(opts_.timeout);

    auto delay = opts_.backoff;
    for (std::size_t attempt = 0; attempt <= opts_.retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(delay);
        delay *= 2;
      }
      auto res = cli.Post("/judge", payload, "application/json");
      if (!res || res->status >= 500 || res->status == 429) continue;
      if (res->status != 200) {
        throw ProtocolError("judge " + url_ + ": HTTP " + std::to_string(res->status));
      }
      return parse(res->body, passages.size());
    }
    return std::vector<std::optional<Grade>>(passages.size());
  }

 private:
  std::vector<std::optional<Grade>> parse(const std::string& body, std::size_t expected) const {
    Json j;
    try {
      j = Json::parse(body);
    } catch (const Json::parse_error& e) {
      throw ProtocolError("judge " + url_ + ": malformed JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("grades") || !j["grades"].is_array()) {
      throw ProtocolError("judge " + url_ + ": response lacks a \"grades\" array");
    }
    if (j["grades"].size() != expected) {
      throw ProtocolError("judge " + url_ + ": expected " + std::to_string(expected) + " grades, got " +
                          std::to_string(j["grades"].size()));
    }
    std::vector<std::optional<Grade>> out;
    for (const auto& g : j["grades"]) {
      if (!g.is_string()) throw ProtocolError("judge " + url_ + ": grade is not a string");
      out.push_back(grade_from_string(g.get<std::string>()));
    }
    return out;
  }

  std::string url_;
  HttpJudgeOptions opts_;
};

}  // namespace asym
