// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <fstream>
#include <string>

#include <gtest/gtest.h>

#include "dmq/config.hpp"
#include "dmq/error.hpp"

namespace dmq {
namespace {

using nlohmann::ordered_json;

TEST(Config, DefaultsRoundTrip) {
  const ExperimentConfig d;
  const ExperimentConfig back = config_from_json(config_to_json(d));
  EXPECT_EQ(config_to_json(back).dump(), config_to_json(d).dump());
  EXPECT_EQ(d.K, 256u);
  EXPECT_EQ(d.I_max, 10u);
  EXPECT_EQ(d.tau_redundancy, 0u);
  EXPECT_DOUBLE_EQ(d.tau_fraction, 0.1);
  EXPECT_EQ(d.generator.backend, "mock");
}

TEST(Config, OverridesUseDottedKeys) {
  ordered_json doc = config_to_json(ExperimentConfig{});
  apply_config_override(doc, "K=64");
  apply_config_override(doc, "generator.timeout_ms=250");
  apply_config_override(doc, "policy=4W8A");
  apply_config_override(doc, "prompt_counts=[2,3]");
  const ExperimentConfig c = config_from_json(doc);
  EXPECT_EQ(c.K, 64u);
  EXPECT_EQ(c.generator.timeout_ms, 250);
  EXPECT_EQ(c.policy, "4W8A");
  EXPECT_EQ(c.prompt_counts, (std::vector<std::size_t>{2, 3}));
  EXPECT_THROW(apply_config_override(doc, "no_equals_sign"), ConfigError);
  EXPECT_THROW(apply_config_override(doc, "bogus=1"), ConfigError);
  EXPECT_THROW(apply_config_override(doc, "generator.bogus=1"), ConfigError);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  ordered_json doc = config_to_json(ExperimentConfig{});
  doc["surprise"] = 1;
  EXPECT_THROW(config_from_json(doc), ConfigError);
  doc = config_to_json(ExperimentConfig{});
  doc["K"] = "many";
  EXPECT_THROW(config_from_json(doc), ConfigError);
  doc["K"] = 0;
  EXPECT_THROW(config_from_json(doc), ConfigError);
  doc = config_to_json(ExperimentConfig{});
  doc["mu_frac"] = 1.0;
  EXPECT_THROW(config_from_json(doc), ConfigError);
  doc = config_to_json(ExperimentConfig{});
  doc["generator"]["backend"] = "carrier-pigeon";
  EXPECT_THROW(config_from_json(doc), ConfigError);
}

TEST(Config, FileLoadingNamesThePath) {
  try {
    load_config_json("/nonexistent/dmq.json");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/dmq.json"), std::string::npos);
  }
  const std::string path = ::testing::TempDir() + "dmq_config_test.json";
  {
    std::ofstream(path) << R"({"K": 32, "generator": {"max_in_flight": 2}})";
  }
  const ExperimentConfig c = config_from_json(load_config_json(path));
  EXPECT_EQ(c.K, 32u);
  EXPECT_EQ(c.generator.max_in_flight, 2);
  EXPECT_EQ(c.T, 50);
  {
    std::ofstream(path) << "{ not json";
  }
  EXPECT_THROW(load_config_json(path), ConfigError);
  std::remove(path.c_str());
}

TEST(Config, HashIgnoresJobsOnly) {
  ExperimentConfig a, b;
  b.jobs = 4;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seed = 2;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

}  // namespace
}  // namespace dmq
