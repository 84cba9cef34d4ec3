// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmq/config.hpp"

#include <fstream>
#include <sstream>

#include "dmq/error.hpp"
#include "dmq/hash.hpp"

namespace dmq {

using json = nlohmann::ordered_json;

json config_to_json(const ExperimentConfig& c) {
  json g = {{"backend", c.generator.backend},
            {"endpoint", c.generator.endpoint},
            {"model", c.generator.model},
            {"api_key_env", c.generator.api_key_env},
            {"timeout_ms", c.generator.timeout_ms},
            {"max_in_flight", c.generator.max_in_flight},
            {"context_size", c.generator.context_size}};
  return {{"seed", c.seed},
          {"out_dir", c.out_dir},
          {"model_path", c.model_path},
          {"aspects_path", c.aspects_path},
          {"prompts_path", c.prompts_path},
          {"final_prompts_path", c.final_prompts_path},
          {"profile_path", c.profile_path},
          {"calibset_path", c.calibset_path},
          {"policy", c.policy},
          {"preserve_sensitive", c.preserve_sensitive},
          {"strategy", c.strategy},
          {"act_range", c.act_range},
          {"K", c.K},
          {"tau_fraction", c.tau_fraction},
          {"mu_frac", c.mu_frac},
          {"sigma_frac", c.sigma_frac},
          {"I_max", c.I_max},
          {"tau_redundancy", c.tau_redundancy},
          {"T", c.T},
          {"schedule", c.schedule},
          {"hidden", c.hidden},
          {"time_embed_dim", c.time_embed_dim},
          {"cond_embed_dim", c.cond_embed_dim},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"train_captions", c.train_captions},
          {"train_points_per_caption", c.train_points_per_caption},
          {"profile_chains", c.profile_chains},
          {"reservoir_size", c.reservoir_size},
          {"eval_prompts", c.eval_prompts},
          {"eval_samples", c.eval_samples},
          {"seeds", c.seeds},
          {"compare_seeds", c.compare_seeds},
          {"prompt_counts", c.prompt_counts},
          {"sweep_bits", c.sweep_bits},
          {"jobs", c.jobs},
          {"generator", g}};
}

namespace {

template <typename T>
void read(const json& doc, const char* key, T& out, const std::string& prefix = "") {
  try {
    out = doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + prefix + key + "' has the wrong type");
  }
}

}  // namespace

void merge_config(json& base, const json& overlay, const std::string& prefix) {
  if (!overlay.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : overlay.items()) {
    const std::string dotted = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + dotted + "'");
    if (base[key].is_object()) {
      merge_config(base[key], value, dotted);
    } else {
      base[key] = value;
    }
  }
}

ExperimentConfig config_from_json(const json& doc) {
  json full = config_to_json(ExperimentConfig{});
  merge_config(full, doc);
  ExperimentConfig c;
  read(full, "seed", c.seed);
  read(full, "out_dir", c.out_dir);
  read(full, "model_path", c.model_path);
  read(full, "aspects_path", c.aspects_path);
  read(full, "prompts_path", c.prompts_path);
  read(full, "final_prompts_path", c.final_prompts_path);
  read(full, "profile_path", c.profile_path);
  read(full, "calibset_path", c.calibset_path);
  read(full, "policy", c.policy);
  read(full, "preserve_sensitive", c.preserve_sensitive);
  read(full, "strategy", c.strategy);
  read(full, "act_range", c.act_range);
  read(full, "K", c.K);
  read(full, "tau_fraction", c.tau_fraction);
  read(full, "mu_frac", c.mu_frac);
  read(full, "sigma_frac", c.sigma_frac);
  read(full, "I_max", c.I_max);
  read(full, "tau_redundancy", c.tau_redundancy);
  read(full, "T", c.T);
  read(full, "schedule", c.schedule);
  read(full, "hidden", c.hidden);
  read(full, "time_embed_dim", c.time_embed_dim);
  read(full, "cond_embed_dim", c.cond_embed_dim);
  read(full, "epochs", c.epochs);
  read(full, "learning_rate", c.learning_rate);
  read(full, "batch_size", c.batch_size);
  read(full, "train_captions", c.train_captions);
  read(full, "train_points_per_caption", c.train_points_per_caption);
  read(full, "profile_chains", c.profile_chains);
  read(full, "reservoir_size", c.reservoir_size);
  read(full, "eval_prompts", c.eval_prompts);
  read(full, "eval_samples", c.eval_samples);
  read(full, "seeds", c.seeds);
  read(full, "compare_seeds", c.compare_seeds);
  read(full, "prompt_counts", c.prompt_counts);
  read(full, "sweep_bits", c.sweep_bits);
  read(full, "jobs", c.jobs);
  const json& g = full.at("generator");
  read(g, "backend", c.generator.backend, "generator.");
  read(g, "endpoint", c.generator.endpoint, "generator.");
  read(g, "model", c.generator.model, "generator.");
  read(g, "api_key_env", c.generator.api_key_env, "generator.");
  read(g, "timeout_ms", c.generator.timeout_ms, "generator.");
  read(g, "max_in_flight", c.generator.max_in_flight, "generator.");
  read(g, "context_size", c.generator.context_size, "generator.");
  validate_config(c);
  return c;
}

void apply_config_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0)
    throw ConfigError("override must look like key=value, got '" + std::string(assignment) + "'");
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json value = json::parse(raw, nullptr, /*allow_exceptions=*/false);
  if (value.is_discarded()) value = raw;

  // Build the nested overlay {"a": {"b": value}} and merge it.
  json overlay = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos;) {
    parts.push_back(rest.substr(0, pos));
    rest = rest.substr(pos + 1);
  }
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) overlay = json{{*it, overlay}};
  merge_config(doc, overlay);
}

json load_config_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  json file = json::parse(ss.str(), nullptr, /*allow_exceptions=*/false);
  if (file.is_discarded()) throw ConfigError("config file '" + path + "' is not valid JSON");
  json full = config_to_json(ExperimentConfig{});
  try {
    merge_config(full, file);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return full;
}

void validate_config(const ExperimentConfig& c) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (c.K < 1) fail("K must be at least 1");
  if (c.T < 2) fail("T must be at least 2");
  if (c.schedule != "linear_beta" && c.schedule != "cosine")
    fail("schedule must be linear_beta or cosine");
  if (c.hidden.size() < 2) fail("hidden needs at least two layers (four affine layers minimum)");
  if (!(c.tau_fraction >= 0.0 && c.tau_fraction <= 1.0)) fail("tau_fraction must lie in [0, 1]");
  if (!(c.mu_frac > 0.0 && c.mu_frac < 1.0)) fail("mu_frac must lie in (0, 1)");
  if (!(c.sigma_frac >= 0.0)) fail("sigma_frac must be non-negative");
  if (c.I_max < 1) fail("I_max must be at least 1");
  if (c.epochs < 0) fail("epochs must be non-negative");
  if (!(c.learning_rate > 0.0)) fail("learning_rate must be positive");
  if (c.batch_size < 1) fail("batch_size must be positive");
  if (c.eval_samples < 2) fail("eval_samples must be at least 2");
  if (c.eval_prompts < 1) fail("eval_prompts must be at least 1");
  if (c.profile_chains < 2) fail("profile_chains must be at least 2");
  if (c.seeds < 1 || c.compare_seeds < 1) fail("seeds and compare_seeds must be at least 1");
  if (c.jobs < 1) fail("jobs must be at least 1");
  if (c.prompt_counts.empty()) fail("prompt_counts must not be empty");
  for (std::size_t n : c.prompt_counts)
    if (n < 1) fail("prompt_counts entries must be positive");
  for (int b : c.sweep_bits)
    if (b != 4 && b != 8 && b != 16) fail("sweep_bits entries must be 4, 8 or 16");
  if (c.generator.backend != "mock" && c.generator.backend != "http")
    fail("generator.backend must be mock or http");
  if (c.generator.timeout_ms < 1) fail("generator.timeout_ms must be positive");
  if (c.generator.max_in_flight < 1) fail("generator.max_in_flight must be positive");
}

std::string config_hash(const ExperimentConfig& cfg) {
  json doc = config_to_json(cfg);
  doc.erase("jobs");
  return hex64(fnv1a64(doc.dump()));
}

}  // namespace dmq
