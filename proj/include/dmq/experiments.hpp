// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end pipeline pieces shared by the CLI commands and the acceptance
// suite: training data, profiling, evaluation against the full-precision
// model, and the three experiment drivers (bitwidth sweep, strategy
// comparison, prompt-count scaling).

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dmq/calibration.hpp"
#include "dmq/diffusion.hpp"
#include "dmq/metrics.hpp"
#include "dmq/profiler.hpp"
#include "dmq/prompts.hpp"
#include "dmq/quantizer.hpp"

namespace dmq {

// Stream ids used to derive independent RngStreams from one seed.
namespace streams {
inline constexpr std::uint64_t kInit = 0x696e6974;
inline constexpr std::uint64_t kTrainCaptions = 0x74636170;
inline constexpr std::uint64_t kTrainData = 0x74646174;
inline constexpr std::uint64_t kTrainLoop = 0x746c6f6f;
inline constexpr std::uint64_t kAugment = 0x61756720;
inline constexpr std::uint64_t kProfile = 0x70726f66;
inline constexpr std::uint64_t kCalibration = 0x63616c69;
inline constexpr std::uint64_t kEvalPrompts = 0x6576706d;
inline constexpr std::uint64_t kEval = 0x6576616c;
}  // namespace streams

// Random captions made of one to three lexicon phrases from distinct aspects.
std::vector<std::string> make_captions(const AspectSet& aspects, std::size_t n, RngStream& rng);

struct TrainingData {
  Tensor2D x0;
  std::vector<ConditionEmbedding> conds;  // one per row
};

// `points_per_caption` mixture draws for every caption.
TrainingData make_training_data(const std::vector<std::string>& captions,
                                const AspectSet& aspects, std::size_t cond_dim,
                                std::size_t points_per_caption, RngStream& rng);

NoiseSchedule make_schedule(const std::string& kind, int T);

struct ToyModelSpec {
  ModelShape shape;
  std::string schedule = "linear_beta";
  int T = 50;
  TrainConfig train;
  std::size_t captions = 128;
  std::size_t points_per_caption = 48;
};

struct TrainedToyModel {
  DenoiserModel model;
  NoiseSchedule schedule;
  std::vector<double> loss_trace;
};

// Trains on captions drawn from the lexicon plus `extra_captions`.
TrainedToyModel train_toy_model(const ToyModelSpec& spec, const AspectSet& aspects,
                                const std::vector<std::string>& extra_captions,
                                std::uint64_t seed);

// Runs `chains_per_prompt` reverse chains per prompt with a tap on every layer.
LayerVarianceProfile profile_model(const DenoiserModel& model, const NoiseSchedule& sched,
                                   const std::vector<ConditionedPrompt>& prompts,
                                   std::size_t chains_per_prompt, std::size_t reservoir_size,
                                   double tau_fraction, std::uint64_t seed);

struct CalibrationRequest {
  SamplingStrategy strategy = SamplingStrategy::kVarianceAware;
  std::size_t K = 256;
  double mu_frac = 0.5;
  double sigma_frac = 0.25;
};

// `profile` may be null for the two baseline strategies.
CalibrationSet build_calibration_set(const DenoiserModel& model, const NoiseSchedule& sched,
                                     const LayerVarianceProfile* profile,
                                     const std::vector<ConditionedPrompt>& prompts,
                                     const CalibrationRequest& req, std::uint64_t seed);

struct EvalMetrics {
  double fd = 0.0;   // mean over prompts
  double kl = 0.0;   // mean over prompts, KL(full || candidate)
  double mse = 0.0;  // mean squared difference of paired outputs
};

// Generates a fixed reference sample per prompt from the full-precision
// model. Candidates are run on the same noise streams, so the full-precision
// model scores zero against itself (up to rounding in FD and KL).
class Evaluator {
 public:
  Evaluator(const NoisePredictor& reference, const NoiseSchedule& sched,
            std::vector<ConditionedPrompt> prompts, std::size_t samples, std::uint64_t seed);

  EvalMetrics evaluate(const NoisePredictor& candidate) const;
  const std::vector<Tensor2D>& reference_outputs() const noexcept { return reference_; }

 private:
  Tensor2D run(const NoisePredictor& model, std::size_t prompt) const;

  const NoiseSchedule& sched_;
  std::vector<ConditionedPrompt> prompts_;
  std::size_t samples_;
  std::uint64_t seed_;
  std::vector<Tensor2D> reference_;
  std::vector<GaussianFit> reference_fits_;
};

// Held-out evaluation prompts, fixed by the seed (not the experiment seed:
// every run of an experiment scores against the same captions).
std::vector<ConditionedPrompt> make_eval_prompts(const AspectSet& aspects, std::size_t n,
                                                 std::size_t cond_dim, std::uint64_t seed);

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Results must be written
// to per-index slots; the first exception (by index) is rethrown.
void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn);

// ---------------------------------------------------------------------------
// Experiments

struct ExperimentInputs {
  const DenoiserModel* model = nullptr;
  const NoiseSchedule* schedule = nullptr;
  const AspectSet* aspects = nullptr;
  std::vector<ConditionedPrompt> eval_prompts;
  std::size_t eval_samples = 256;
  unsigned jobs = 1;
};

struct SweepRow {
  std::uint64_t seed = 0;
  std::string policy;
  int weight_bits = 32;
  EvalMetrics metrics;
  SizeReport size;
};

// Weight-only quantization without calibration at each bitwidth, preceded by
// a full-precision row.
std::vector<SweepRow> sweep_bitwidth(const ExperimentInputs& in, const std::vector<int>& bits,
                                     const std::vector<std::uint64_t>& seeds);

struct StrategyOptions {
  std::string policy = "8W8A";
  bool preserve_sensitive = false;
  RangeMethod act_range;
  std::size_t K = 256;
  double tau_fraction = kDefaultTauFraction;
  double mu_frac = 0.5;
  double sigma_frac = 0.25;
  std::size_t profile_chains = 16;
  std::size_t reservoir_size = 256;
};

struct CompareRow {
  std::uint64_t seed = 0;
  SamplingStrategy strategy = SamplingStrategy::kVarianceAware;
  std::string policy;
  std::size_t K = 0;
  std::size_t samples = 0;
  EvalMetrics metrics;
  SizeReport size;
};

// Per seed: one profile, then one calibration set per strategy at equal K,
// each used to calibrate the same policy.
std::vector<CompareRow> compare_strategies(const ExperimentInputs& in,
                                           const std::vector<ConditionedPrompt>& calib_prompts,
                                           const StrategyOptions& opts,
                                           const std::vector<std::uint64_t>& seeds);

struct ScaleRow {
  std::uint64_t seed = 0;
  std::size_t requested = 0;
  std::size_t prompts = 0;
  std::size_t covered = 0;
  std::vector<std::string> uncovered;
  EvalMetrics metrics;
};

using GeneratorFactory = std::function<std::unique_ptr<CaptionGenerator>(std::uint64_t seed)>;

// For each count n: the first n seed prompts, augmented with at most n
// prompts in total, then padded to n; variance-aware calibration on that set.
std::vector<ScaleRow> prompt_scaling(const ExperimentInputs& in, const PromptSet& seed_set,
                                     const std::vector<std::size_t>& counts,
                                     const AugmentOptions& augment_opts,
                                     const GeneratorFactory& make_generator,
                                     const StrategyOptions& opts,
                                     const std::vector<std::uint64_t>& seeds);

// seed, seed + 1, ...
std::vector<std::uint64_t> seed_list(std::uint64_t first, std::size_t count);

}  // namespace dmq
