// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

// dmq command-line driver. Links only the C API.

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dmq/dmq.h"

namespace {

struct Overrides {
  std::string config;
  std::vector<std::string> sets;
  std::optional<unsigned long long> seed;
  std::optional<std::string> out;
  std::optional<unsigned> jobs;
  std::optional<std::string> model, aspects, prompts, final_prompts, profile, calibset;
  std::optional<std::string> policy, strategy, act_range, backend;
  std::optional<std::size_t> K, seeds;
  bool preserve_sensitive = false;
  std::string results_dir;
};

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

int report(dmq_status s) {
  std::fprintf(stderr, "dmq: %s: %s\n", dmq_status_name(s), dmq_last_error());
  return static_cast<int>(s);
}

void write_stdout(const char* text, size_t len, void*) {
  std::fwrite(text, 1, len, stdout);
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dmq: post-training quantization toolkit for a toy diffusion model"};
  app.set_version_flag("--version", std::string(dmq_version()));
  app.require_subcommand(1);
  app.fallthrough();

  Overrides o;
  app.add_option("--config", o.config, "JSON config file");
  app.add_option("--set", o.sets, "Override a config key: key=value (repeatable)");
  app.add_option("--seed", o.seed, "Base seed");
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--jobs", o.jobs, "Seeds run in parallel")->check(CLI::PositiveNumber);
  app.add_option("--model", o.model, "Model checkpoint path");
  app.add_option("--aspects", o.aspects, "Aspect lexicon file");
  app.add_option("--prompts", o.prompts, "Seed prompt set file");
  app.add_option("--final-prompts", o.final_prompts, "Augmented prompt set file");
  app.add_option("--profile", o.profile, "Variance profile file");
  app.add_option("--calibset", o.calibset, "Calibration set file");
  app.add_option("--policy", o.policy, "Precision policy, e.g. 8W8A");
  app.add_flag("--preserve-sensitive", o.preserve_sensitive,
               "Keep the first and last layer at full precision");
  app.add_option("--strategy", o.strategy, "variance_aware, random_uniform or normal_timestep");
  app.add_option("--act-range", o.act_range, "minmax or percentile:<p>");
  app.add_option("-K,--calib-size", o.K, "Calibration set size");
  app.add_option("--seeds", o.seeds, "Number of seeds for sweep, compare and scale");
  app.add_option("--generator", o.backend, "Caption generator backend: mock or http");

  const char* help[] = {
      "train", "Train the toy diffusion model",
      "profile", "Profile per-layer, per-timestep activation variance",
      "prompts", "Build the coverage-augmented prompt set",
      "calibset", "Sample a calibration set",
      "quantize", "Quantize the model and evaluate it",
      "sweep", "Weight-only bitwidth sweep",
      "compare", "Compare calibration sampling strategies",
      "scale", "Prompt-count scaling experiment",
      "report", "Summarize results.jsonl into tables"};
  for (std::size_t i = 0; i < std::size(help); i += 2) {
    CLI::App* sub = app.add_subcommand(help[i], help[i + 1]);
    if (std::string(help[i]) == "report")
      sub->add_option("dir", o.results_dir, "Results directory (defaults to --out)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return DMQ_ERR_ARGUMENT;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  dmq_config* cfg = nullptr;
  if (dmq_status s = dmq_config_create(&cfg); s != DMQ_OK) return report(s);

  std::vector<std::string> assignments;
  auto str = [&](const char* key, const std::optional<std::string>& v) {
    if (v) assignments.push_back(std::string(key) + "=" + quoted(*v));
  };
  str("model_path", o.model);
  str("aspects_path", o.aspects);
  str("prompts_path", o.prompts);
  str("final_prompts_path", o.final_prompts);
  str("profile_path", o.profile);
  str("calibset_path", o.calibset);
  str("policy", o.policy);
  str("strategy", o.strategy);
  str("act_range", o.act_range);
  str("generator.backend", o.backend);
  str("out_dir", o.out);
  if (!o.results_dir.empty()) str("out_dir", o.results_dir);
  if (o.seed) assignments.push_back("seed=" + std::to_string(*o.seed));
  if (o.jobs) assignments.push_back("jobs=" + std::to_string(*o.jobs));
  if (o.K) assignments.push_back("K=" + std::to_string(*o.K));
  if (o.seeds) {
    assignments.push_back("seeds=" + std::to_string(*o.seeds));
    assignments.push_back("compare_seeds=" + std::to_string(*o.seeds));
  }
  if (o.preserve_sensitive) assignments.push_back("preserve_sensitive=true");

  dmq_status s = DMQ_OK;
  if (!o.config.empty()) s = dmq_config_load_file(cfg, o.config.c_str());
  for (std::size_t i = 0; s == DMQ_OK && i < o.sets.size(); ++i)
    s = dmq_config_set(cfg, o.sets[i].c_str());
  for (std::size_t i = 0; s == DMQ_OK && i < assignments.size(); ++i)
    s = dmq_config_set(cfg, assignments[i].c_str());
  if (s == DMQ_OK) s = dmq_run_command(cfg, command.c_str(), write_stdout, nullptr);
  const int code = s == DMQ_OK ? 0 : report(s);
  dmq_config_destroy(cfg);
  return code;
}
