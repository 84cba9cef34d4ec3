// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

// Calibration-set construction.
//
// Three strategies pick (layer, timestep) cells; each cell is then realized
// by replaying a fresh reverse chain for a prompt (assigned round-robin) down
// to that timestep and capturing the layer input together with the latent.
//
//  * variance_aware: cells drawn i.i.d. from the profile's P; cells whose
//    variance is below tau_var are rejected. If no cell reaches tau_var, the
//    threshold is halved until one does (at most 64 halvings).
//  * random_uniform: cells uniform over all layers x timesteps.
//  * normal_timestep: timestep round(N(mu_frac T, (sigma_frac T)^2)) clipped
//    to [1, T], layer uniform.

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dmq/diffusion.hpp"
#include "dmq/profiler.hpp"
#include "dmq/prompts.hpp"
#include "vendor_json.hpp"

namespace dmq {

enum class SamplingStrategy { kVarianceAware, kRandomUniform, kNormalTimestep };

std::string_view to_string(SamplingStrategy s);
SamplingStrategy parse_sampling_strategy(std::string_view s);

struct CalibrationSample {
  std::uint64_t draw_index = 0;
  std::string prompt_id;
  int timestep = 0;
  std::string layer;
  Tensor2D activation;  // 1 x layer input width
  Tensor2D latent;      // 1 x data_dim, the chain state at `timestep`
  std::vector<double> cond;

  friend bool operator==(const CalibrationSample&, const CalibrationSample&) = default;
};

struct CalibrationSet {
  std::vector<CalibrationSample> samples;
  std::size_t K = 0;
  SamplingStrategy strategy = SamplingStrategy::kVarianceAware;
  std::uint64_t seed = 0;
  std::string profile_hash;  // empty for strategies that ignore the profile
  std::string model_hash;

  bool empty() const noexcept { return samples.empty(); }
  friend bool operator==(const CalibrationSet&, const CalibrationSet&) = default;
};

struct ConditionedPrompt {
  std::string id;
  ConditionEmbedding cond;
};

std::vector<ConditionedPrompt> condition_prompts(const PromptSet& prompts,
                                                 const AspectSet& aspects, std::size_t dim);

struct CellDraw {
  std::string layer;
  int t = 0;
  friend bool operator==(const CellDraw&, const CellDraw&) = default;
};

inline constexpr int kMaxTauHalvings = 64;

struct VarianceAwareDraws {
  std::vector<CellDraw> cells;
  double tau_var = 0.0;       // threshold in force while drawing
  int halvings = 0;
  std::uint64_t rejected = 0;
};

// Throws ArgumentError for K == 0 or an empty profile and
// DegenerateProfileError when 64 halvings do not bring tau_var down to the
// largest variance.
VarianceAwareDraws draw_variance_aware(const LayerVarianceProfile& profile, std::size_t K,
                                       RngStream& rng);
std::vector<CellDraw> draw_random_uniform(const std::vector<std::string>& layers, int T,
                                          std::size_t K, RngStream& rng);
// Throws ArgumentError unless 0 < mu_frac < 1 and sigma_frac >= 0.
std::vector<CellDraw> draw_normal_timestep(const std::vector<std::string>& layers, int T,
                                           std::size_t K, RngStream& rng, double mu_frac = 0.5,
                                           double sigma_frac = 0.25);

// Realizes draw i with prompt i mod |prompts| on stream (rng.seed(), base + i).
std::vector<CalibrationSample> capture_samples(const DenoiserModel& model,
                                               const NoiseSchedule& sched,
                                               const std::vector<ConditionedPrompt>& prompts,
                                               const std::vector<CellDraw>& draws,
                                               const RngStream& rng);

CalibrationSet sample_calibration_set(const DenoiserModel& model, const NoiseSchedule& sched,
                                      const LayerVarianceProfile& profile,
                                      const std::vector<ConditionedPrompt>& prompts,
                                      std::size_t K, RngStream& rng);
CalibrationSet sample_random_uniform(const DenoiserModel& model, const NoiseSchedule& sched,
                                     const std::vector<ConditionedPrompt>& prompts,
                                     std::size_t K, RngStream& rng);
CalibrationSet sample_normal_timestep(const DenoiserModel& model, const NoiseSchedule& sched,
                                      const std::vector<ConditionedPrompt>& prompts,
                                      std::size_t K, RngStream& rng, double mu_frac = 0.5,
                                      double sigma_frac = 0.25);

// Calibration-set file (JSON, format "dmq-calibset", format_version 1): the
// header fields of CalibrationSet followed by one record per sample.
inline constexpr int kCalibSetFormatVersion = 1;
nlohmann::ordered_json calibration_set_to_json(const CalibrationSet& set);
CalibrationSet calibration_set_from_json(const nlohmann::ordered_json& doc);
void save_calibration_set(const std::string& path, const CalibrationSet& set);
CalibrationSet load_calibration_set(const std::string& path);

}  // namespace dmq
