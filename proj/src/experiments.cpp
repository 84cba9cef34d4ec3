// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmq/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "dmq/checkpoint.hpp"
#include "dmq/error.hpp"

namespace dmq {

std::vector<std::string> make_captions(const AspectSet& aspects, std::size_t n, RngStream& rng) {
  if (aspects.size() == 0) throw ArgumentError("make_captions: empty aspect set");
  std::vector<std::string> out;
  out.reserve(n);
  const std::size_t max_parts = std::min<std::size_t>(3, aspects.size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t parts = 1 + rng.uniform_index(max_parts);
    std::vector<std::size_t> chosen;
    while (chosen.size() < parts) {
      const std::size_t a = rng.uniform_index(aspects.size());
      if (std::find(chosen.begin(), chosen.end(), a) == chosen.end()) chosen.push_back(a);
    }
    std::string text = "a";
    for (std::size_t k = 0; k < chosen.size(); ++k) {
      const auto& lex = aspects[chosen[k]].lexicon;
      text += k == 0 ? " " : (k == 1 ? " with " : " and ");
      text += lex[rng.uniform_index(lex.size())];
    }
    out.push_back(std::move(text));
  }
  return out;
}

TrainingData make_training_data(const std::vector<std::string>& captions,
                                const AspectSet& aspects, std::size_t cond_dim,
                                std::size_t points_per_caption, RngStream& rng) {
  TrainingData data;
  if (captions.empty() || points_per_caption == 0)
    throw ArgumentError("training data needs captions and points per caption");
  std::vector<Tensor2D> blocks;
  std::size_t data_dim = 0;
  for (const std::string& c : captions) {
    ConditionEmbedding cond = embed_condition(c, aspects, cond_dim);
    const MixtureSpec spec = mixture_for(cond, 2);
    data_dim = spec.mode_a.size();
    blocks.push_back(sample_mixture(spec, points_per_caption, rng));
    for (std::size_t k = 0; k < points_per_caption; ++k) data.conds.push_back(cond);
  }
  data.x0 = Tensor2D(captions.size() * points_per_caption, data_dim);
  std::size_t r = 0;
  for (const Tensor2D& b : blocks)
    for (std::size_t i = 0; i < b.rows(); ++i, ++r)
      std::copy(b.row(i).begin(), b.row(i).end(), data.x0.row(r).begin());
  return data;
}

NoiseSchedule make_schedule(const std::string& kind, int T) {
  return parse_schedule_kind(kind) == ScheduleKind::kCosine ? NoiseSchedule::cosine(T)
                                                            : NoiseSchedule::linear_beta(T);
}

TrainedToyModel train_toy_model(const ToyModelSpec& spec, const AspectSet& aspects,
                                const std::vector<std::string>& extra_captions,
                                std::uint64_t seed) {
  RngStream caption_rng(seed, streams::kTrainCaptions);
  std::vector<std::string> captions = make_captions(aspects, spec.captions, caption_rng);
  captions.insert(captions.end(), extra_captions.begin(), extra_captions.end());

  RngStream data_rng(seed, streams::kTrainData);
  TrainingData data = make_training_data(captions, aspects, spec.shape.cond_embed_dim,
                                         spec.points_per_caption, data_rng);
  NoiseSchedule sched = make_schedule(spec.schedule, spec.T);
  RngStream init_rng(seed, streams::kInit);
  DenoiserModel model = DenoiserModel::create(spec.shape, init_rng);
  RngStream loop_rng(seed, streams::kTrainLoop);
  TrainResult r = train(model, data.x0, data.conds, sched, spec.train, loop_rng);
  return {std::move(r.model), std::move(sched), std::move(r.loss_trace)};
}

LayerVarianceProfile profile_model(const DenoiserModel& model, const NoiseSchedule& sched,
                                   const std::vector<ConditionedPrompt>& prompts,
                                   std::size_t chains_per_prompt, std::size_t reservoir_size,
                                   double tau_fraction, std::uint64_t seed) {
  if (prompts.empty()) throw ArgumentError("profiling needs at least one prompt");
  ActivationTap tap(model.layer_names(), reservoir_size, seed);
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    RngStream rng(seed, splitmix64(streams::kProfile) + i);
    (void)generate(model, prompts[i].cond, sched, chains_per_prompt, rng, &tap);
  }
  return build_profile(tap, tau_fraction);
}

CalibrationSet build_calibration_set(const DenoiserModel& model, const NoiseSchedule& sched,
                                     const LayerVarianceProfile* profile,
                                     const std::vector<ConditionedPrompt>& prompts,
                                     const CalibrationRequest& req, std::uint64_t seed) {
  RngStream rng(seed, streams::kCalibration);
  switch (req.strategy) {
    case SamplingStrategy::kVarianceAware:
      if (profile == nullptr) throw ArgumentError("variance_aware sampling needs a profile");
      return sample_calibration_set(model, sched, *profile, prompts, req.K, rng);
    case SamplingStrategy::kRandomUniform:
      return sample_random_uniform(model, sched, prompts, req.K, rng);
    case SamplingStrategy::kNormalTimestep:
      return sample_normal_timestep(model, sched, prompts, req.K, rng, req.mu_frac,
                                    req.sigma_frac);
  }
  throw ArgumentError("unknown sampling strategy");
}

// ---------------------------------------------------------------------------
// Evaluation

Evaluator::Evaluator(const NoisePredictor& reference, const NoiseSchedule& sched,
                     std::vector<ConditionedPrompt> prompts, std::size_t samples,
                     std::uint64_t seed)
    : sched_(sched), prompts_(std::move(prompts)), samples_(samples), seed_(seed) {
  if (prompts_.empty()) throw ArgumentError("evaluation needs at least one prompt");
  if (samples_ < 2) throw ArgumentError("evaluation needs at least two samples per prompt");
  for (std::size_t i = 0; i < prompts_.size(); ++i) {
    reference_.push_back(run(reference, i));
    reference_fits_.push_back(fit_gaussian(reference_.back()));
  }
}

Tensor2D Evaluator::run(const NoisePredictor& model, std::size_t prompt) const {
  RngStream rng(seed_, splitmix64(streams::kEval) + prompt);
  return generate(model, prompts_[prompt].cond, sched_, samples_, rng);
}

EvalMetrics Evaluator::evaluate(const NoisePredictor& candidate) const {
  EvalMetrics m;
  for (std::size_t i = 0; i < prompts_.size(); ++i) {
    const Tensor2D out = run(candidate, i);
    const GaussianFit fit = fit_gaussian(out);
    m.fd += frechet_distance(reference_fits_[i], fit);
    m.kl += kl_gaussian(reference_fits_[i], fit);
    double se = 0.0;
    const auto a = reference_[i].values();
    const auto b = out.values();
    for (std::size_t k = 0; k < a.size(); ++k) se += (a[k] - b[k]) * (a[k] - b[k]);
    m.mse += se / static_cast<double>(a.size());
  }
  const auto n = static_cast<double>(prompts_.size());
  m.fd /= n;
  m.kl /= n;
  m.mse /= n;
  return m;
}

std::vector<ConditionedPrompt> make_eval_prompts(const AspectSet& aspects, std::size_t n,
                                                 std::size_t cond_dim, std::uint64_t seed) {
  RngStream rng(seed, streams::kEvalPrompts);
  const auto captions = make_captions(aspects, n, rng);
  std::vector<ConditionedPrompt> out;
  for (std::size_t i = 0; i < captions.size(); ++i)
    out.push_back({"e" + std::to_string(i + 1), embed_condition(captions[i], aspects, cond_dim)});
  return out;
}

void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(jobs, n));
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<std::uint64_t> seed_list(std::uint64_t first, std::size_t count) {
  std::vector<std::uint64_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = first + i;
  return out;
}

// ---------------------------------------------------------------------------
// Experiments

namespace {

void check_inputs(const ExperimentInputs& in) {
  if (!in.model || !in.schedule || !in.aspects)
    throw ArgumentError("experiment inputs are incomplete");
  if (in.eval_prompts.empty()) throw ArgumentError("experiment needs evaluation prompts");
}

PrecisionPolicy make_policy(const DenoiserModel& model, const StrategyOptions& opts) {
  return opts.preserve_sensitive ? PrecisionPolicy::sensitive_preserved(model, opts.policy)
                                 : PrecisionPolicy::uniform(model, opts.policy);
}

}  // namespace

std::vector<SweepRow> sweep_bitwidth(const ExperimentInputs& in, const std::vector<int>& bits,
                                     const std::vector<std::uint64_t>& seeds) {
  check_inputs(in);
  const DenoiserModel& model = *in.model;
  const CalibrationSet no_calib;

  std::vector<std::vector<SweepRow>> per_seed(seeds.size());
  parallel_for(seeds.size(), in.jobs, [&](std::size_t s) {
    const Evaluator eval(model, *in.schedule, in.eval_prompts, in.eval_samples, seeds[s]);
    const PrecisionPolicy full = PrecisionPolicy::uniform(model, "32W32A");
    per_seed[s].push_back(
        {seeds[s], full.notation(), 32, eval.evaluate(model), model_size_bytes(model, full)});
    for (int b : bits) {
      const PrecisionPolicy policy =
          PrecisionPolicy::uniform(model, std::to_string(b) + "W32A");
      const QuantizedModel q = quantize_model(model, policy, no_calib);
      per_seed[s].push_back(
          {seeds[s], policy.notation(), b, eval.evaluate(q), model_size_bytes(model, policy)});
    }
  });
  std::vector<SweepRow> rows;
  for (auto& v : per_seed) rows.insert(rows.end(), v.begin(), v.end());
  return rows;
}

std::vector<CompareRow> compare_strategies(const ExperimentInputs& in,
                                           const std::vector<ConditionedPrompt>& calib_prompts,
                                           const StrategyOptions& opts,
                                           const std::vector<std::uint64_t>& seeds) {
  check_inputs(in);
  const DenoiserModel& model = *in.model;
  const PrecisionPolicy policy = make_policy(model, opts);
  const SizeReport size = model_size_bytes(model, policy);
  constexpr SamplingStrategy kOrder[] = {SamplingStrategy::kRandomUniform,
                                         SamplingStrategy::kNormalTimestep,
                                         SamplingStrategy::kVarianceAware};

  std::vector<std::vector<CompareRow>> per_seed(seeds.size());
  parallel_for(seeds.size(), in.jobs, [&](std::size_t s) {
    const std::uint64_t seed = seeds[s];
    const LayerVarianceProfile profile =
        profile_model(model, *in.schedule, calib_prompts, opts.profile_chains,
                      opts.reservoir_size, opts.tau_fraction, seed);
    const Evaluator eval(model, *in.schedule, in.eval_prompts, in.eval_samples, seed);
    for (SamplingStrategy strategy : kOrder) {
      const CalibrationRequest req{strategy, opts.K, opts.mu_frac, opts.sigma_frac};
      const CalibrationSet calib =
          build_calibration_set(model, *in.schedule, &profile, calib_prompts, req, seed);
      const QuantizedModel q = quantize_model(model, policy, calib, opts.act_range);
      per_seed[s].push_back({seed, strategy, policy.notation(), opts.K, calib.samples.size(),
                             eval.evaluate(q), size});
    }
  });
  std::vector<CompareRow> rows;
  for (auto& v : per_seed) rows.insert(rows.end(), v.begin(), v.end());
  return rows;
}

std::vector<ScaleRow> prompt_scaling(const ExperimentInputs& in, const PromptSet& seed_set,
                                     const std::vector<std::size_t>& counts,
                                     const AugmentOptions& augment_opts,
                                     const GeneratorFactory& make_generator,
                                     const StrategyOptions& opts,
                                     const std::vector<std::uint64_t>& seeds) {
  check_inputs(in);
  const DenoiserModel& model = *in.model;
  const AspectSet& aspects = *in.aspects;
  const PrecisionPolicy policy = make_policy(model, opts);

  std::vector<std::vector<ScaleRow>> per_seed(seeds.size());
  parallel_for(seeds.size(), in.jobs, [&](std::size_t s) {
    const std::uint64_t seed = seeds[s];
    const Evaluator eval(model, *in.schedule, in.eval_prompts, in.eval_samples, seed);
    for (std::size_t n : counts) {
      PromptSet subset;
      subset.role = seed_set.role;
      for (std::size_t i = 0; i < std::min(n, seed_set.size()); ++i)
        subset.prompts.push_back(seed_set.prompts[i]);

      auto generator = make_generator(seed);
      AugmentOptions aopts = augment_opts;
      aopts.max_size = n;
      RngStream aug_rng(seed, streams::kAugment);
      AugmentResult aug = augment(subset, aspects, *generator, aopts, aug_rng);
      extend_prompt_set(aug.final_set, n, aspects, *generator, aug_rng);

      const auto conds = condition_prompts(aug.final_set, aspects, model.cond_embed_dim());
      const LayerVarianceProfile profile =
          profile_model(model, *in.schedule, conds, opts.profile_chains, opts.reservoir_size,
                        opts.tau_fraction, seed);
      const CalibrationRequest req{SamplingStrategy::kVarianceAware, opts.K, opts.mu_frac,
                                   opts.sigma_frac};
      const CalibrationSet calib =
          build_calibration_set(model, *in.schedule, &profile, conds, req, seed);
      const QuantizedModel q = quantize_model(model, policy, calib, opts.act_range);

      ScaleRow row;
      row.seed = seed;
      row.requested = n;
      row.prompts = aug.final_set.size();
      const CoverageVector cov = global_coverage(aug.final_set, aspects.size());
      row.covered = cov.count();
      for (std::size_t b = 0; b < aspects.size(); ++b)
        if (!cov.test(b)) row.uncovered.push_back(aspects[b].id);
      row.metrics = eval.evaluate(q);
      per_seed[s].push_back(std::move(row));
    }
  });
  std::vector<ScaleRow> rows;
  for (auto& v : per_seed) rows.insert(rows.end(), v.begin(), v.end());
  return rows;
}

}  // namespace dmq
