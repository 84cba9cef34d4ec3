// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment configuration.
//
// A config is a JSON object. Values are resolved in this order, later
// sources winning: built-in defaults, the --config file, --set key=value
// overrides (dotted keys reach nested objects), then dedicated CLI flags.
// Unknown keys are rejected.

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "vendor_json.hpp"

namespace dmq {

struct GeneratorConfig {
  std::string backend = "mock";  // "mock" or "http"
  std::string endpoint;          // chat-completions URL for the http backend
  std::string model = "gpt-3.5-turbo";
  std::string api_key_env = "DMQ_GENERATOR_API_KEY";
  int timeout_ms = 10000;
  int max_in_flight = 4;
  std::size_t context_size = 8;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "dmq_out";
  // Empty paths fall back to <out_dir>/<artifact> (model, profile, prompts,
  // calibset) or to the built-in data (aspects, seed prompts).
  std::string model_path;
  std::string aspects_path;
  std::string prompts_path;
  std::string final_prompts_path;
  std::string profile_path;
  std::string calibset_path;

  std::string policy = "8W8A";
  bool preserve_sensitive = false;
  std::string strategy = "variance_aware";
  std::string act_range = "minmax";
  std::size_t K = 256;
  double tau_fraction = 0.10;
  double mu_frac = 0.5;
  double sigma_frac = 0.25;
  std::size_t I_max = 10;
  std::uint64_t tau_redundancy = 0;

  // Model and training.
  int T = 50;
  std::string schedule = "linear_beta";
  std::vector<std::size_t> hidden = {64, 64, 64};
  std::size_t time_embed_dim = 16;
  std::size_t cond_embed_dim = 16;
  int epochs = 60;
  double learning_rate = 0.05;
  std::size_t batch_size = 64;
  std::size_t train_captions = 128;
  std::size_t train_points_per_caption = 48;

  // Profiling and evaluation.
  std::size_t profile_chains = 16;
  std::size_t reservoir_size = 256;
  std::size_t eval_prompts = 8;
  std::size_t eval_samples = 256;

  // Experiments.
  std::size_t seeds = 5;           // sweep and scale
  std::size_t compare_seeds = 10;  // compare
  std::vector<std::size_t> prompt_counts = {4, 8, 16, 32, 64};
  std::vector<int> sweep_bits = {16, 8, 4};
  unsigned jobs = 1;

  GeneratorConfig generator;
};

nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg);
// Throws ConfigError on unknown keys, wrong types or invalid values.
ExperimentConfig config_from_json(const nlohmann::ordered_json& doc);

// Deep-merges `overlay` into `base`. Throws ConfigError for keys absent from
// `base`, naming the dotted key.
void merge_config(nlohmann::ordered_json& base, const nlohmann::ordered_json& overlay,
                  const std::string& prefix = "");

// Applies "a.b=value". The value is read as JSON when it parses, otherwise as
// a string.
void apply_config_override(nlohmann::ordered_json& doc, std::string_view assignment);

// Loads and merges a config file over the defaults. Throws ConfigError
// naming the path when it cannot be read or parsed.
nlohmann::ordered_json load_config_json(const std::string& path);

// Throws ConfigError when a value is out of range.
void validate_config(const ExperimentConfig& cfg);

// FNV-1a over the canonical JSON with "jobs" removed; hex encoded.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace dmq
