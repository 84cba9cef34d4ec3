// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <thread>
#include <vector>

#include <gtest/gtest.h>
#include <httplib.h>

#include "dmq/error.hpp"
#include "dmq/http_generator.hpp"
#include "dmq/vendor_json.hpp"

namespace dmq {
namespace {

class LocalServer {
 public:
  explicit LocalServer(httplib::Server::Handler handler) {
    server_.Post("/v1/chat/completions", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalServer() {
    server_.stop();
    thread_.join();
  }
  std::string endpoint() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

std::string completion(const std::string& content) {
  nlohmann::json j = {{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}};
  return j.dump();
}

HttpGeneratorOptions options_for(const LocalServer& s) {
  HttpGeneratorOptions o;
  o.endpoint = s.endpoint();
  o.api_key = "test-key";
  o.timeout_ms = 2000;
  return o;
}

TEST(ChatRequest, NamesAspectAndContext) {
  const AspectSet a = AspectSet::defaults();
  CaptionRequest r;
  r.aspect_index = a.index_of("pitch");
  r.context = {"a dog barking"};
  const auto body = nlohmann::json::parse(build_chat_request(r, a, "m1"));
  EXPECT_EQ(body["model"], "m1");
  const std::string user = body["messages"][1]["content"];
  EXPECT_NE(user.find("pitch"), std::string::npos);
  EXPECT_NE(user.find("a dog barking"), std::string::npos);
}

TEST(ChatResponse, TakesFirstTrimmedLine) {
  EXPECT_EQ(parse_chat_response(completion("  \"a shrill whistle\"  \nextra"), "pitch"),
            "a shrill whistle");
  try {
    parse_chat_response("{}", "pitch");
    FAIL();
  } catch (const GeneratorError& e) {
    EXPECT_EQ(e.aspect(), "pitch");
  }
  EXPECT_THROW(parse_chat_response("not json", "pitch"), GeneratorError);
}

TEST(HttpGenerator, SendsBearerTokenAndParsesReply) {
  std::string auth;
  LocalServer server([&](const httplib::Request& req, httplib::Response& res) {
    auth = req.get_header_value("Authorization");
    res.set_content(completion("a deep booming bass tone"), "application/json");
  });
  HttpCaptionGenerator gen(options_for(server));
  const AspectSet a = AspectSet::defaults();
  CaptionRequest r;
  r.aspect_index = a.index_of("pitch");
  EXPECT_EQ(gen.generate(r, a), "a deep booming bass tone");
  EXPECT_EQ(auth, "Bearer test-key");
}

TEST(HttpGenerator, ErrorStatusCarriesAspect) {
  LocalServer server([](const httplib::Request&, httplib::Response& res) {
    res.status = 503;
    res.set_content("busy", "text/plain");
  });
  HttpCaptionGenerator gen(options_for(server));
  const AspectSet a = AspectSet::defaults();
  CaptionRequest r;
  r.aspect_index = a.index_of("texture");
  try {
    gen.generate(r, a);
    FAIL();
  } catch (const GeneratorError& e) {
    EXPECT_EQ(e.aspect(), "texture");
  }
}

TEST(HttpGenerator, TimeoutAndRefusedConnection) {
  LocalServer slow([](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(600));
    res.set_content(completion("late"), "application/json");
  });
  HttpGeneratorOptions o = options_for(slow);
  o.timeout_ms = 100;
  HttpCaptionGenerator gen(o);
  const AspectSet a = AspectSet::defaults();
  EXPECT_THROW(gen.generate({}, a), GeneratorError);

  HttpGeneratorOptions closed;
  closed.endpoint = "http://127.0.0.1:1/v1/chat/completions";
  closed.api_key = "k";
  closed.timeout_ms = 500;
  HttpCaptionGenerator refused(closed);
  EXPECT_THROW(refused.generate({}, a), GeneratorError);
}

TEST(HttpGenerator, LimitsRequestsInFlight) {
  std::atomic<int> active{0}, peak{0};
  LocalServer server([&](const httplib::Request&, httplib::Response& res) {
    const int now = ++active;
    int prev = peak.load();
    while (now > prev && !peak.compare_exchange_weak(prev, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    --active;
    res.set_content(completion("ok"), "application/json");
  });
  HttpGeneratorOptions o = options_for(server);
  o.max_in_flight = 2;
  HttpCaptionGenerator gen(o);
  const AspectSet a = AspectSet::defaults();
  std::vector<std::thread> threads;
  for (int i = 0; i < 6; ++i) threads.emplace_back([&] { gen.generate({}, a); });
  for (auto& t : threads) t.join();
  EXPECT_LE(peak.load(), 2);
  EXPECT_GE(peak.load(), 1);
}

TEST(GeneratorFactory, FallsBackToMockWithoutKey) {
  GeneratorConfig cfg;
  cfg.backend = "http";
  cfg.endpoint = "http://127.0.0.1:9/v1/chat/completions";
  cfg.api_key_env = "DMQ_TEST_UNSET_KEY_VARIABLE";
  ::unsetenv(cfg.api_key_env.c_str());
  std::string desc;
  auto gen = make_caption_generator(cfg, 3, &desc);
  EXPECT_NE(dynamic_cast<MockCaptionGenerator*>(gen.get()), nullptr);
  EXPECT_NE(desc.find("mock"), std::string::npos);

  ::setenv(cfg.api_key_env.c_str(), "secret", 1);
  auto http = make_caption_generator(cfg, 3, &desc);
  EXPECT_NE(dynamic_cast<HttpCaptionGenerator*>(http.get()), nullptr);
  EXPECT_EQ(desc.find("secret"), std::string::npos);
  ::unsetenv(cfg.api_key_env.c_str());

  cfg.backend = "mock";
  EXPECT_NE(dynamic_cast<MockCaptionGenerator*>(make_caption_generator(cfg, 3).get()), nullptr);
}

}  // namespace
}  // namespace dmq
