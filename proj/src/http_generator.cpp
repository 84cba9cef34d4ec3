// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmq/http_generator.hpp"

#include <chrono>
#include <cstdlib>

#include <httplib.h>

#include "dmq/error.hpp"
#include "dmq/vendor_json.hpp"

namespace dmq {

using json = nlohmann::json;

namespace {

// Splits "scheme://host[:port]/path" into base and path.
std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("generator endpoint needs a scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

class SlotGuard {
 public:
  explicit SlotGuard(std::counting_semaphore<>& s) : s_(s) { s_.acquire(); }
  ~SlotGuard() { s_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<>& s_;
};

}  // namespace

std::string build_chat_request(const CaptionRequest& request, const AspectSet& aspects,
                               const std::string& model) {
  const Aspect& a = aspects[request.aspect_index];
  std::string examples;
  for (std::size_t i = 0; i < a.lexicon.size() && i < 4; ++i)
    examples += (i ? ", " : "") + a.lexicon[i];
  std::string user = "Write one short caption for an audio clip that clearly features " +
                     a.name + " (for example: " + examples + ").";
  if (request.purpose == CaptionPurpose::kDiversify)
    user += " It must differ in content from the existing captions.";
  if (!request.context.empty()) {
    user += " Existing captions:";
    for (const std::string& c : request.context) user += "\n- " + c;
  }
  user += "\nReply with the caption only.";
  json body = {{"model", model},
               {"temperature", 0},
               {"max_tokens", 60},
               {"messages", json::array({{{"role", "system"},
                                          {"content", "You write concise audio captions."}},
                                         {{"role", "user"}, {"content", user}}})}};
  return body.dump();
}

std::string parse_chat_response(const std::string& body, const std::string& aspect) {
  json doc = json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) throw GeneratorError(aspect, "generator response is not JSON");
  try {
    std::string text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
    const auto nl = text.find('\n');
    if (nl != std::string::npos) text.resize(nl);
    const auto first = text.find_first_not_of(" \t\r\"");
    const auto last = text.find_last_not_of(" \t\r\"");
    if (first == std::string::npos) throw GeneratorError(aspect, "generator returned an empty caption");
    return text.substr(first, last - first + 1);
  } catch (const json::exception&) {
    throw GeneratorError(aspect, "generator response has no choices[0].message.content");
  }
}

HttpCaptionGenerator::HttpCaptionGenerator(HttpGeneratorOptions options)
    : options_(std::move(options)) {
  if (options_.max_in_flight < 1) throw ConfigError("max_in_flight must be positive");
  if (options_.timeout_ms < 1) throw ConfigError("timeout_ms must be positive");
  std::tie(base_, path_) = split_url(options_.endpoint);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (base_.rfind("https://", 0) == 0)
    throw ConfigError("https generator endpoints need a build with DMQ_WITH_OPENSSL=ON");
#endif
  slots_ = std::make_unique<std::counting_semaphore<>>(options_.max_in_flight);
}

HttpCaptionGenerator::~HttpCaptionGenerator() = default;

std::string HttpCaptionGenerator::generate(const CaptionRequest& request,
                                           const AspectSet& aspects) {
  const std::string aspect = aspects[request.aspect_index].id;
  const std::string body = build_chat_request(request, aspects, options_.model);

  SlotGuard slot(*slots_);
  httplib::Client client(base_);
  const auto timeout = std::chrono::milliseconds(options_.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  if (!options_.api_key.empty()) client.set_bearer_token_auth(options_.api_key);
  auto res = client.Post(path_, body, "application/json");
  if (!res)
    throw GeneratorError(aspect, "generator request to " + options_.endpoint +
                                     " failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300)
    throw GeneratorError(aspect, "generator returned HTTP " + std::to_string(res->status));
  return parse_chat_response(res->body, aspect);
}

std::unique_ptr<CaptionGenerator> make_caption_generator(const GeneratorConfig& cfg,
                                                         std::uint64_t seed,
                                                         std::string* description) {
  if (cfg.backend == "http") {
    const char* key = cfg.api_key_env.empty() ? nullptr : std::getenv(cfg.api_key_env.c_str());
    if (!cfg.endpoint.empty() && key != nullptr && *key != '\0') {
      if (description) *description = "http generator at " + cfg.endpoint;
      return std::make_unique<HttpCaptionGenerator>(HttpGeneratorOptions{
          cfg.endpoint, key, cfg.model, cfg.timeout_ms, cfg.max_in_flight});
    }
    if (description)
      *description = "mock generator (http backend selected but " +
                     std::string(cfg.endpoint.empty() ? "no endpoint set"
                                                      : cfg.api_key_env + " is unset") +
                     ")";
    return std::make_unique<MockCaptionGenerator>(seed);
  }
  if (description) *description = "mock generator";
  return std::make_unique<MockCaptionGenerator>(seed);
}

}  // namespace dmq
