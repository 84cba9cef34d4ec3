// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

// Caption generator backed by an OpenAI-style chat-completions endpoint.

#pragma once

#include <memory>
#include <semaphore>
#include <string>

#include "dmq/config.hpp"
#include "dmq/prompts.hpp"

namespace dmq {

struct HttpGeneratorOptions {
  std::string endpoint;  // e.g. http://127.0.0.1:8080/v1/chat/completions
  std::string api_key;
  std::string model = "gpt-3.5-turbo";
  int timeout_ms = 10000;
  int max_in_flight = 4;
};

// Thread-safe; at most max_in_flight requests are outstanding at once.
// Transport failures, non-2xx responses and unparseable bodies throw
// GeneratorError carrying the target aspect id.
class HttpCaptionGenerator final : public CaptionGenerator {
 public:
  explicit HttpCaptionGenerator(HttpGeneratorOptions options);
  ~HttpCaptionGenerator() override;

  std::string generate(const CaptionRequest& request, const AspectSet& aspects) override;

 private:
  HttpGeneratorOptions options_;
  std::string base_;  // scheme://host[:port]
  std::string path_;
  std::unique_ptr<std::counting_semaphore<>> slots_;
};

// The request body sent for `request`.
std::string build_chat_request(const CaptionRequest& request, const AspectSet& aspects,
                               const std::string& model);
// First choice's message content reduced to one trimmed line. Throws
// GeneratorError (with `aspect`) when the body is not a chat completion.
std::string parse_chat_response(const std::string& body, const std::string& aspect);

// The HTTP backend only when backend == "http", an endpoint is set and the
// API-key variable is non-empty; otherwise the deterministic mock seeded with
// `seed`. `description` receives a one-line summary.
std::unique_ptr<CaptionGenerator> make_caption_generator(const GeneratorConfig& cfg,
                                                         std::uint64_t seed,
                                                         std::string* description = nullptr);

}  // namespace dmq
